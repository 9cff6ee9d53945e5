# Module ablation matrix
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from src.metrics.segmentation import SCORE_NAMES, aggregate_reports
from src.phantom.dataset import Manifest
from src.training.evaluate import evaluate_model
from src.training.trainer import train_model
from src.utils.config import ModelConfig, TrainConfig

logger = logging.getLogger(__name__)

# (row name, flag overrides); every row trains on identical folds and seeds
ABLATION_ROWS: List[Tuple[str, Dict[str, bool]]] = [
    ("baseline", {"use_mem": False, "use_fem": True, "use_aem": True, "use_dcl": False}),
    ("fem_only", {"use_mem": True, "use_fem": True, "use_aem": False, "use_dcl": False}),
    ("aem_only", {"use_mem": True, "use_fem": False, "use_aem": True, "use_dcl": False}),
    ("mem", {"use_mem": True, "use_fem": True, "use_aem": True, "use_dcl": False}),
    ("mem_dcl", {"use_mem": True, "use_fem": True, "use_aem": True, "use_dcl": True}),
]
TABLE_JSON = "table3.json"
TABLE_CSV = "table3.csv"


def row_configs(base: TrainConfig, rows: Optional[Sequence[str]] = None) -> List[Tuple[str, TrainConfig]]:
    selected = [(name, flags) for name, flags in ABLATION_ROWS if rows is None or name in rows]
    return [(name, TrainConfig.model_validate({**base.model_dump(), **flags})) for name, flags in selected]


def _table_row(name: str, cfg: TrainConfig, aggregate: Dict[str, Any]) -> Dict[str, Any]:
    row = {"row": name, "use_mem": cfg.use_mem, "use_fem": cfg.fem_enabled,
           "use_aem": cfg.aem_enabled, "use_dcl": cfg.use_dcl, "subjects": aggregate["subjects"]}
    for metric in SCORE_NAMES:
        stats = aggregate["mean"][metric]
        row[f"{metric}_mean"] = stats["mean"]
        row[f"{metric}_sd"] = stats["sd"]
    return row


def run_ablation_matrix(manifest: Manifest, base: TrainConfig, out_dir: str,
                        model_cfg: Optional[ModelConfig] = None, rows: Optional[Sequence[str]] = None,
                        progress: bool = True) -> pd.DataFrame:
    """Train and evaluate each row on `base.ablation_folds`; writes the JSON and CSV tables."""
    os.makedirs(out_dir, exist_ok=True)
    table = []
    details = {}
    for name, cfg in row_configs(base, rows):
        logger.info(f"Ablation row '{name}': mem={cfg.use_mem} fem={cfg.fem_enabled} "
                    f"aem={cfg.aem_enabled} dcl={cfg.use_dcl}")
        reports = []
        runs = []
        for fold in base.ablation_folds:
            run_dir = os.path.join(out_dir, name, f"fold_{fold}")
            record = train_model(manifest, cfg, run_dir, model_cfg, fold, progress)
            evaluation = evaluate_model(record.best_checkpoint, manifest, record.val_ids, cfg.threshold,
                                        cfg.device, progress)
            evaluation.save(os.path.join(run_dir, "metrics.json"))
            reports.extend(evaluation.reports.values())
            runs.append({"fold": fold, "best_epoch": record.best_epoch, "best_val_dice": record.best_val_dice,
                         "final_coarse_loss": record.epochs[-1]["coarse_loss"]})
        aggregate = aggregate_reports(reports)
        table.append(_table_row(name, cfg, aggregate))
        details[name] = {"runs": runs, "aggregate": aggregate}

    frame = pd.DataFrame(table)
    with open(os.path.join(out_dir, TABLE_JSON), "w", encoding="utf-8") as f:
        json.dump({"rows": table, "details": details}, f, indent=2)
        f.write("\n")
    frame.to_csv(os.path.join(out_dir, TABLE_CSV), index=False, float_format="%.4f")
    logger.info(f"Ablation table:\n{frame.to_string(index=False)}")
    return frame