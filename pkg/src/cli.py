# Command-line dispatch for every pipeline stage
import os
import sys
import json
import logging
import argparse
import platform
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from pydantic import ValidationError

from src.metrics.plots import plot_class_metrics, plot_overlay, plot_training_curves, read_train_log
from src.metrics.segmentation import evaluate_case
from src.model.dclnet import build_model, parameter_summary
from src.phantom.dataset import generate_dataset, read_manifest
from src.tractlabels.labels import streamlines_to_label_volume, transfer_labels
from src.tractlabels.streamlines import read_streamlines
from src.training.ablation import ABLATION_ROWS, run_ablation_matrix
from src.training.evaluate import predict_subject
from src.training.trainer import model_config_for, train_model
from src.utils.config import DEFAULT_CONFIG_PATH, ProjectConfig, TrainConfig, load_config
from src.utils.errors import UsageError
from src.volume.io import channel_stem, read_label_volume, read_volume, write_label_volume, write_volume

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
RUN_RECORD = "run.json"


class ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so dispatch owns the exit code."""

    def error(self, message):
        raise UsageError(message)


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return number


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG_PATH, help="YAML/JSON config file")
    common.add_argument("--out", default=None, help="Output directory (or file for eval)")
    common.add_argument("--seed", type=int, default=None, help="Override phantom and training seeds")
    common.add_argument("--overwrite", action="store_true", help="Replace existing outputs")
    common.add_argument("--quiet", action="store_true", help="Warnings only, no progress bars")

    parser = ArgumentParser(prog="dclnet", description="Dual-label cranial nerve segmentation pipeline")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("gen-phantom", parents=[common], help="Generate a synthetic cohort")
    p.add_argument("--n", type=int, required=True, help="Number of subjects")
    p.add_argument("--streamlines", action="store_true", help="Also write per-subject streamlines")
    p.add_argument("--coarse-mode", choices=["degrade", "tractography"], default=None)

    p = sub.add_parser("voxelize", parents=[common], help="Streamlines or atlas labels to a label volume")
    p.add_argument("--streamlines", default=None, help="JSON-lines streamline file")
    p.add_argument("--geometry", "--reference", dest="geometry", default=None,
                   help="Volume header giving the target grid")
    p.add_argument("--tau", type=_positive_int, default=None, help="Minimum streamline visits per voxel")
    p.add_argument("--min-island", type=_positive_int, default=None, help="Smallest component kept, in voxels")
    p.add_argument("--labels", default=None, help="Atlas label directory to transfer")
    p.add_argument("--transform", default=None, help="JSON 4x4 subject-to-atlas world transform")
    p.add_argument("--target", default=None, help="Volume header of the subject grid")

    p = sub.add_parser("train", parents=[common], help="Train one cross-validation fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, default=None)
    p.add_argument("--preset", choices=["desk", "paper-protocol"], default=None)

    p = sub.add_parser("ablate", parents=[common], help="Run the module ablation matrix")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rows", nargs="+", choices=[name for name, _ in ABLATION_ROWS], default=None)
    p.add_argument("--preset", choices=["desk", "paper-protocol"], default=None)

    p = sub.add_parser("eval", parents=[common], help="Score a predicted label volume")
    p.add_argument("--pred", required=True, help="Predicted label directory")
    p.add_argument("--truth", required=True, help="Reference label directory")

    p = sub.add_parser("predict", parents=[common], help="Segment one subject with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--t1w", required=True)
    p.add_argument("--fa", required=True)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("metrics-plot", parents=[common], help="Plot training curves and class metrics")
    p.add_argument("--log", default=None, help="train_log.jsonl")
    p.add_argument("--metrics", default=None, help="metrics.json")
    p.add_argument("--format", choices=["png", "svg"], default="png")
    p.add_argument("--volume", default=None, help="Volume header drawn under the overlay")
    p.add_argument("--truth", default=None, help="Reference label directory for the overlay")
    p.add_argument("--pred", default=None, help="Predicted label directory for the overlay")
    p.add_argument("--slice", type=int, default=None, help="Axial slice (default: most reference voxels)")

    sub.add_parser("model-summary", parents=[common], help="Parameter counts per component")
    return parser


def _load_project(args) -> ProjectConfig:
    project = load_config(args.config)
    if args.seed is not None:
        project.phantom.seed = args.seed
        project.training.seed = args.seed
    return project


def _training_config(project: ProjectConfig, preset: Optional[str], fold: Optional[int] = None) -> TrainConfig:
    values = project.training.model_dump()
    if fold is not None:
        values["fold"] = fold
    if preset is None:
        return TrainConfig.model_validate(values)
    for key in ("batch_size", "epochs"):
        values.pop(key)
    return TrainConfig.preset(preset, **values)


def _guard(path: str, overwrite: bool):
    if os.path.exists(path) and not overwrite:
        raise UsageError(f"{path} already exists; pass --overwrite to replace it")


def _write_json(path: str, data: Any):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def _read_transform(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    matrix = np.asarray(data["matrix"] if isinstance(data, dict) else data, dtype=np.float64)
    return matrix.reshape(4, 4)


def cmd_gen_phantom(args, project: ProjectConfig) -> Dict[str, Any]:
    out = args.out
    _guard(os.path.join(out, "manifest.json"), args.overwrite)
    cfg = project.phantom
    if args.coarse_mode:
        cfg.coarse_mode = args.coarse_mode
    manifest = generate_dataset(cfg, args.n, out, with_streamlines=args.streamlines,
                                voxelize_cfg=project.voxelize, progress=not args.quiet)
    return {"subjects": len(manifest.subjects), "manifest": os.path.join(out, "manifest.json")}


def cmd_voxelize(args, project: ProjectConfig) -> Dict[str, Any]:
    out = args.out
    _guard(os.path.join(out, "labels.json"), args.overwrite)
    cfg = project.voxelize
    if args.tau is not None:
        cfg.tau = args.tau
    if args.min_island is not None:
        cfg.min_island = args.min_island
    if args.streamlines:
        if not args.geometry:
            raise UsageError("voxelize --streamlines needs --geometry")
        geometry = read_volume(args.geometry).geometry
        bundle = read_streamlines(args.streamlines, geometry)
        labels = streamlines_to_label_volume(bundle, geometry, project.phantom.classes, cfg)
    elif args.labels:
        if not args.target:
            raise UsageError("voxelize --labels needs --target")
        transform = _read_transform(args.transform) if args.transform else np.eye(4)
        labels = transfer_labels(read_label_volume(args.labels), transform, read_volume(args.target).geometry)
    else:
        raise UsageError("voxelize needs --streamlines/--geometry or --labels/--target")
    write_label_volume(labels, out)
    return {"voxels": {name: int(labels.channels[i].sum()) for i, name in enumerate(labels.class_names)},
            "tau": cfg.tau, "min_island": cfg.min_island}


def cmd_train(args, project: ProjectConfig) -> Dict[str, Any]:
    out = args.out
    _guard(os.path.join(out, "train_log.jsonl"), args.overwrite)
    cfg = _training_config(project, args.preset, args.fold)
    record = train_model(read_manifest(args.manifest), cfg, out, project.model, progress=not args.quiet)
    return {"best_epoch": record.best_epoch, "best_val_dice": record.best_val_dice,
            "best_checkpoint": record.best_checkpoint}


def cmd_ablate(args, project: ProjectConfig) -> Dict[str, Any]:
    out = args.out
    _guard(os.path.join(out, "table3.json"), args.overwrite)
    cfg = _training_config(project, args.preset)
    frame = run_ablation_matrix(read_manifest(args.manifest), cfg, out, project.model, args.rows,
                                progress=not args.quiet)
    return {"rows": frame["row"].tolist()}


def cmd_eval(args, project: ProjectConfig) -> Dict[str, Any]:
    out = args.out
    if not out.endswith(".json"):
        out = os.path.join(out, "metrics.json")
    _guard(out, args.overwrite)
    report = evaluate_case(read_label_volume(args.pred), read_label_volume(args.truth))
    _write_json(out, report.to_dict())
    return {"metrics": out, "mean": report.mean}


def cmd_predict(args, project: ProjectConfig) -> Dict[str, Any]:
    out = args.out
    _guard(os.path.join(out, "labels", "labels.json"), args.overwrite)
    threshold = args.threshold if args.threshold is not None else project.training.threshold
    prediction = predict_subject(args.checkpoint, read_volume(args.t1w), read_volume(args.fa), threshold,
                                 project.phantom.classes, device=project.training.device)
    write_label_volume(prediction.labels, os.path.join(out, "labels"))
    for i, (name, volume) in enumerate(zip(prediction.labels.class_names, prediction.probabilities)):
        write_volume(volume, os.path.join(out, "probabilities", channel_stem(i, name)))
    return {"labels": os.path.join(out, "labels"), "threshold": threshold}


def cmd_metrics_plot(args, project: ProjectConfig) -> Dict[str, Any]:
    if not (args.log or args.metrics or args.volume):
        raise UsageError("metrics-plot needs --log, --metrics and/or --volume/--truth/--pred")
    if args.volume and not (args.truth and args.pred):
        raise UsageError("metrics-plot --volume needs --truth and --pred")
    out = args.out
    written = []
    if args.log:
        written.append(plot_training_curves(read_train_log(args.log), os.path.join(out, f"training_curves.{args.format}")))
    if args.metrics:
        with open(args.metrics, "r", encoding="utf-8") as f:
            report = json.load(f)
        # evaluate_model output nests the aggregate; per-subject metrics.json is flat
        report = report.get("aggregate", report)
        written.append(plot_class_metrics(report, os.path.join(out, f"class_metrics.{args.format}")))
    if args.volume:
        written.append(plot_overlay(read_volume(args.volume), read_label_volume(args.truth),
                                    read_label_volume(args.pred), args.slice,
                                    os.path.join(out, f"overlay.{args.format}")))
    return {"figures": written}


def cmd_model_summary(args, project: ProjectConfig) -> Dict[str, Any]:
    model = build_model(model_config_for(project.training, project.model), seed=project.training.seed)
    summary = parameter_summary(model)
    width = max(len(name) for name in summary)
    for name, count in summary.items():
        print(f"{name:<{width}}  {count:>12,d}")
    _write_json(os.path.join(args.out, "model_summary.json"), summary)
    return {"parameters": summary}


DEFAULT_OUTPUTS = {
    "gen-phantom": "data/phantom",
    "voxelize": "labels",
    "train": "runs/train",
    "ablate": "runs/ablation",
    "eval": "metrics.json",
    "predict": "prediction",
    "metrics-plot": "plots",
    "model-summary": "runs/model-summary",
}

COMMANDS = {
    "gen-phantom": cmd_gen_phantom,
    "voxelize": cmd_voxelize,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "metrics-plot": cmd_metrics_plot,
    "model-summary": cmd_model_summary,
}


def _run_record_path(args) -> str:
    directory = os.path.dirname(args.out) if args.out.endswith(".json") else args.out
    return os.path.join(directory or ".", RUN_RECORD)


def _versions() -> Dict[str, str]:
    return {"python": platform.python_version(), "numpy": np.__version__, "torch": torch.__version__}


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse `argv` and run one subcommand; returns 0, 1 (usage) or 2 (runtime failure)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.out is None:
            args.out = DEFAULT_OUTPUTS[args.command]
        if args.quiet:
            logging.getLogger().setLevel(logging.WARNING)
        project = _load_project(args)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"Invalid configuration {argv}: {e}")
        return EXIT_USAGE

    record = {
        "command": args.command,
        "argv": argv,
        "seed": {"phantom": project.phantom.seed, "training": project.training.seed},
        "config": project.model_dump(mode="json"),
        "versions": _versions(),
        "started": datetime.now(timezone.utc).isoformat(),
    }
    code = EXIT_RUNTIME
    try:
        record["result"] = COMMANDS[args.command](args, project)
        code = EXIT_OK
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        record["error"] = str(e)
        code = EXIT_USAGE
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        record["error"] = f"{type(e).__name__}: {e}"
    finally:
        record["finished"] = datetime.now(timezone.utc).isoformat()
        record["exit_code"] = code
        path = _run_record_path(args)
        try:
            _write_json(path, record)
        except OSError as e:
            logger.warning(f"Could not write {path}: {e}")
    return code
