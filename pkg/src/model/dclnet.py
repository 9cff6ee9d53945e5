# Dual-decoder network wiring and checkpoints
import os
import logging
from dataclasses import dataclass
from typing import Any, Dict, Literal, Optional, Tuple

import torch
import torch.nn as nn

from src.model.decoder import Decoder
from src.model.exchange import EncoderState, ModalityEncoder
from src.model.fusion import CrossFusion
from src.utils.config import DEFAULT_CONFIG_PATH, ModelConfig, load_section
from src.utils.errors import GeometryError

logger = logging.getLogger(__name__)


@dataclass
class PredictionPair:
    """Sigmoid maps of both decoders, (B, C, H, W) each, plus intermediate state."""

    p1: torch.Tensor
    p2: torch.Tensor
    logits1: Optional[torch.Tensor] = None
    logits2: Optional[torch.Tensor] = None
    state: Optional[EncoderState] = None
    fused: Optional[torch.Tensor] = None


class DCLNet(nn.Module):
    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        widths = self.config.widths
        self.encoder = ModalityEncoder(self.config)
        self.fusion = CrossFusion(widths[-1], self.config.fused_width, self.config.attention_heads)
        self.decoder1 = Decoder(widths, self.config.fused_width, self.config.num_classes, dropout=0.0)
        self.decoder2 = Decoder(widths, self.config.fused_width, self.config.num_classes,
                                dropout=self.config.decoder_dropout)

    def forward(self, x_t1w: torch.Tensor, x_fa: torch.Tensor) -> PredictionPair:
        if x_t1w.shape != x_fa.shape:
            raise GeometryError(f"T1w {tuple(x_t1w.shape)} and FA {tuple(x_fa.shape)} slices differ")
        if x_t1w.shape[-1] % 16 or x_t1w.shape[-2] % 16:
            raise GeometryError(f"slice size {tuple(x_t1w.shape[-2:])} must be divisible by 16")
        state = self.encoder(x_t1w, x_fa)
        x4_t1w, x4_fa = state.features[-1]
        fused = self.fusion(x4_t1w, x4_fa)
        skips = state.skips()
        logits1 = self.decoder1(fused, skips)
        logits2 = self.decoder2(fused, skips)
        return PredictionPair(torch.sigmoid(logits1), torch.sigmoid(logits2), logits1, logits2, state, fused)


def build_model(config: Optional[ModelConfig] = None, seed: Optional[int] = None,
                config_path: str = DEFAULT_CONFIG_PATH) -> DCLNet:
    """Seeded construction; without `config` the `model` section of `config_path` is used."""
    if config is None:
        config = load_section(config_path, "model")
    if seed is not None:
        torch.manual_seed(seed)
    return DCLNet(config)


def dclnet_forward(model: DCLNet, x_t1w: torch.Tensor, x_fa: torch.Tensor,
                   mode: Literal["train", "eval"] = "eval") -> PredictionPair:
    """Forward pass in the requested mode (eval disables dropout and freezes batch statistics)."""
    model.train(mode == "train")
    return model(x_t1w, x_fa)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def parameter_summary(model: nn.Module) -> Dict[str, int]:
    """Parameter counts per top-level submodule, plus the total."""
    summary = {name: count_parameters(child) for name, child in model.named_children()}
    summary["total"] = count_parameters(model)
    return summary


def save_checkpoint(path: str, model: DCLNet, extra: Optional[Dict[str, Any]] = None):
    """Single archive: config echo + named parameter arrays (+ optional training metadata)."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    payload = {"model_config": model.config.model_dump(), "state_dict": model.state_dict()}
    payload.update(extra or {})
    torch.save(payload, path)
    logger.debug(f"Saved checkpoint to {path}")


def load_checkpoint(path: str, map_location: str = "cpu") -> Tuple[DCLNet, Dict[str, Any]]:
    payload = torch.load(path, map_location=map_location, weights_only=True)
    model = DCLNet(ModelConfig.model_validate(payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
