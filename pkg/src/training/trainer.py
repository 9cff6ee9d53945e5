# Dual-label training loop with best-checkpoint selection
import json
import logging
import math
import os
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch
from torch import optim
from torch.utils.data import DataLoader
from tqdm import tqdm

from src.losses.dual_label import total_loss
from src.model.dclnet import DCLNet, build_model, dclnet_forward, save_checkpoint
from src.phantom.dataset import Manifest
from src.training.dataset import SliceDataset
from src.training.evaluate import evaluate_model
from src.training.folds import make_folds
from src.utils.config import DEFAULT_CONFIG_PATH, ModelConfig, TrainConfig, load_section
from src.utils.errors import TrainingDivergedError

logger = logging.getLogger(__name__)

TRAIN_LOG = "train_log.jsonl"
BEST_CHECKPOINT = "best.pt"
LAST_CHECKPOINT = "last.pt"


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def model_config_for(train_cfg: TrainConfig, model_cfg: Optional[ModelConfig] = None) -> ModelConfig:
    """Architecture with the exchange modules switched per the ablation flags."""
    model_cfg = model_cfg or ModelConfig()
    return model_cfg.model_copy(update={"use_fem": train_cfg.fem_enabled, "use_aem": train_cfg.aem_enabled})


@dataclass
class RunRecord:
    fold: int
    epochs: List[Dict[str, Any]] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_dice: float = -math.inf
    best_checkpoint: Optional[str] = None
    last_checkpoint: Optional[str] = None
    train_ids: List[str] = field(default_factory=list)
    val_ids: List[str] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        if not math.isfinite(record["best_val_dice"]):
            record["best_val_dice"] = None
        return record


def run_epoch(model: DCLNet, loader: DataLoader, optimizer: Optional[optim.Optimizer] = None,
              use_dcl: bool = True, device: str = "cpu", progress: bool = False,
              description: str = "train") -> Dict[str, float]:
    """One pass over `loader`; trains when an optimizer is given. Returns slice-weighted mean losses."""
    training = optimizer is not None
    sums = {"dice_loss": 0.0, "bce_loss": 0.0, "coarse_loss": 0.0, "total": 0.0}
    seen = 0
    for batch in tqdm(loader, desc=description, disable=not progress, leave=False):
        t1w, fa = batch["t1w"].to(device), batch["fa"].to(device)
        precise, coarse = batch["precise"].to(device), batch["coarse"].to(device)
        with torch.set_grad_enabled(training):
            pair = dclnet_forward(model, t1w, fa, mode="train" if training else "eval")
            losses = total_loss(pair.p1, pair.p2, precise, coarse, use_dcl=use_dcl)
        if not torch.isfinite(losses.total):
            raise TrainingDivergedError(f"non-finite loss {losses.as_log()} after {seen} slices")
        if training:
            optimizer.zero_grad()
            losses.total.backward()
            optimizer.step()
        n = t1w.shape[0]
        seen += n
        for key, value in losses.as_log().items():
            sums[key] += value * n
    return {key: value / max(seen, 1) for key, value in sums.items()}


def _append_log(path: str, record: Dict[str, Any]):
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record) + "\n")


def train_model(manifest: Manifest, train_cfg: Optional[TrainConfig], out_dir: str,
                model_cfg: Optional[ModelConfig] = None, fold: Optional[int] = None,
                progress: bool = True, config_path: str = DEFAULT_CONFIG_PATH) -> RunRecord:
    """Train on the fold's training subjects and keep the checkpoint with the best validation mean Dice on P1.

    Missing `train_cfg` / `model_cfg` come from the `training` / `model` sections of `config_path`.
    """
    if train_cfg is None:
        train_cfg = load_section(config_path, "training")
    if model_cfg is None:
        model_cfg = load_section(config_path, "model")
    fold = train_cfg.fold if fold is None else fold
    seed_everything(train_cfg.seed)
    train_ids, val_ids = make_folds(manifest.subject_ids, train_cfg.folds, train_cfg.seed)[fold]
    logger.info(f"Fold {fold}: {len(train_ids)} training / {len(val_ids)} validation subjects")

    train_samples = [manifest.load(sid) for sid in train_ids]
    dataset = SliceDataset(train_samples, train_cfg.augmentation, train_cfg.seed, train_cfg.label_noise_flip_rate)
    loader = DataLoader(dataset, batch_size=train_cfg.batch_size, shuffle=True,
                        num_workers=train_cfg.num_workers,
                        generator=torch.Generator().manual_seed(train_cfg.seed))
    if train_cfg.num_workers > 0:
        logger.warning("Multi-worker loading: batch order is not bit-reproducible")

    model_cfg = model_config_for(train_cfg, model_cfg)
    if model_cfg.num_classes != len(train_samples[0].precise.class_names):
        model_cfg = model_cfg.model_copy(update={"num_classes": len(train_samples[0].precise.class_names)})
    model = build_model(model_cfg, seed=train_cfg.seed).to(train_cfg.device)
    optimizer = optim.SGD(model.parameters(), lr=train_cfg.learning_rate, momentum=train_cfg.momentum,
                          weight_decay=train_cfg.weight_decay)

    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, TRAIN_LOG)
    open(log_path, "w").close()
    record = RunRecord(fold=fold, train_ids=train_ids, val_ids=val_ids,
                       config={"training": train_cfg.model_dump(), "model": model_cfg.model_dump()})
    last_path = os.path.join(out_dir, LAST_CHECKPOINT)
    best_path = os.path.join(out_dir, BEST_CHECKPOINT)

    for epoch in tqdm(range(train_cfg.epochs), desc=f"fold {fold}", disable=not progress):
        dataset.set_epoch(epoch)
        try:
            losses = run_epoch(model, loader, optimizer, train_cfg.use_dcl, train_cfg.device)
        except TrainingDivergedError as e:
            checkpoint = last_path if os.path.exists(last_path) else None
            logger.error(f"Training diverged at epoch {epoch}: {e}; last finite checkpoint: {checkpoint}")
            raise TrainingDivergedError(f"epoch {epoch}: {e}", checkpoint=checkpoint) from e

        evaluation = evaluate_model(model, manifest, val_ids, train_cfg.threshold, train_cfg.device, progress=False)
        val_dice = evaluation.aggregate["mean"]["dice"]["mean"]
        val_dice = float(val_dice) if val_dice is not None else 0.0
        entry = {"epoch": epoch, **losses, "val_dice": val_dice}
        _append_log(log_path, entry)
        record.epochs.append(entry)

        metadata = {"training": train_cfg.model_dump(), "epoch": epoch, "val_dice": val_dice, "fold": fold}
        save_checkpoint(last_path, model, metadata)
        record.last_checkpoint = last_path
        if val_dice > record.best_val_dice:
            record.best_val_dice, record.best_epoch = val_dice, epoch
            save_checkpoint(best_path, model, metadata)
            record.best_checkpoint = best_path
        logger.info(f"Epoch {epoch}: total {losses['total']:.4f} "
                    f"(dice {losses['dice_loss']:.4f}, bce {losses['bce_loss']:.4f}, "
                    f"coarse {losses['coarse_loss']:.4f}), val Dice {val_dice:.4f}")

    with open(os.path.join(out_dir, "run_record.json"), "w", encoding="utf-8") as f:
        json.dump(record.to_dict(), f, indent=2)
        f.write("\n")
    logger.info(f"Best epoch {record.best_epoch} with validation mean Dice {record.best_val_dice:.4f}")
    return record


def cross_validate(manifest: Manifest, train_cfg: TrainConfig, out_dir: str,
                   model_cfg: Optional[ModelConfig] = None, folds: Optional[Sequence[int]] = None,
                   progress: bool = True) -> List[RunRecord]:
    """One training run per fold, each under `out_dir/fold_<i>`."""
    folds = list(range(train_cfg.folds)) if folds is None else list(folds)
    return [train_model(manifest, train_cfg, os.path.join(out_dir, f"fold_{i}"), model_cfg, i, progress)
            for i in folds]
