# Dual-label objective: Dice + BCE on the precise branch, coarse-gated BCE on the auxiliary branch
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import torch

from src.utils.errors import GeometryError

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7
DICE_SMOOTH = 1e-6


def _check_shapes(pred: torch.Tensor, target: torch.Tensor, what: str):
    if pred.shape != target.shape:
        raise GeometryError(f"{what}: prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")


def dice_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = DICE_SMOOTH,
              dims: Optional[Sequence[int]] = None) -> torch.Tensor:
    """1 - (2 sum(p*y) + eps) / (sum(y) + sum(p) + eps).

    Sums run over `dims` (all elements when None); the remaining dims are kept.
    """
    _check_shapes(pred, target, "dice_loss")
    dims = tuple(dims) if dims is not None else tuple(range(pred.dim()))
    intersection = (pred * target).sum(dim=dims)
    denominator = target.sum(dim=dims) + pred.sum(dim=dims)
    return 1 - (2 * intersection + eps) / (denominator + eps)


def bce_loss(pred: torch.Tensor, target: torch.Tensor, reduction: str = "mean",
             clamp: float = BCE_CLAMP) -> torch.Tensor:
    """Binary cross-entropy with predictions clamped to [clamp, 1 - clamp]."""
    _check_shapes(pred, target, "bce_loss")
    p = pred.clamp(clamp, 1 - clamp)
    loss = -(target * torch.log(p) + (1 - target) * torch.log(1 - p))
    if reduction == "mean":
        return loss.mean()
    if reduction == "sum":
        return loss.sum()
    if reduction == "none":
        return loss
    raise ValueError(f"Unknown reduction: {reduction}")


def _per_class_dims(pred: torch.Tensor):
    # (B, C, H, W) -> sum over everything except the class axis
    if pred.dim() < 2:
        raise GeometryError(f"expected class maps with a channel axis, got shape {tuple(pred.shape)}")
    return (0,) + tuple(range(2, pred.dim()))


def supervised_loss_L1(p1: torch.Tensor, target: torch.Tensor):
    """Returns (dice, bce, per-class dice + bce), each averaged over classes."""
    dims = _per_class_dims(p1)
    dice_per_class = dice_loss(p1, target, dims=dims)
    bce_per_class = bce_loss(p1, target, reduction="none").mean(dim=dims)
    return dice_per_class.mean(), bce_per_class.mean(), dice_per_class + bce_per_class


def coarse_masked_loss_L2(p2: torch.Tensor, coarse: torch.Tensor, target: torch.Tensor,
                          reduction: str = "mean") -> torch.Tensor:
    """BCE of the coarse-gated auxiliary prediction, each class gated by its own coarse channel."""
    _check_shapes(p2, coarse, "coarse_masked_loss_L2")
    return bce_loss(coarse * p2, target, reduction=reduction)


@dataclass
class LossBreakdown:
    dice: torch.Tensor
    bce: torch.Tensor
    coarse: torch.Tensor
    total: torch.Tensor
    per_class: torch.Tensor

    def as_log(self, class_names: Optional[Sequence[str]] = None) -> Dict[str, float]:
        """Plain floats for the JSON-lines training log."""
        log = {
            "dice_loss": float(self.dice.detach()),
            "bce_loss": float(self.bce.detach()),
            "coarse_loss": float(self.coarse.detach()),
            "total": float(self.total.detach()),
        }
        if class_names is not None:
            log["per_class"] = {name: float(v) for name, v in zip(class_names, self.per_class.detach().tolist())}
        return log


def total_loss(p1: torch.Tensor, p2: torch.Tensor, target: torch.Tensor, coarse: torch.Tensor,
               use_dcl: bool = True) -> LossBreakdown:
    _check_shapes(p1, target, "total_loss")
    _check_shapes(p2, target, "total_loss")
    dice, bce, per_class = supervised_loss_L1(p1, target)
    if use_dcl:
        coarse_term = coarse_masked_loss_L2(p2, coarse, target)
    else:
        coarse_term = torch.zeros((), dtype=p1.dtype, device=p1.device)
    return LossBreakdown(dice, bce, coarse_term, dice + bce + coarse_term, per_class)
