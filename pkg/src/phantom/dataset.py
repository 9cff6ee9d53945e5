# Phantom cohort generation and manifest handling
import os
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from tqdm import tqdm

from src.phantom.generator import coarse_agreement, generate_phantom, phantom_streamlines
from src.tractlabels.streamlines import write_streamlines
from src.utils.config import DEFAULT_CONFIG_PATH, PhantomConfig, VoxelizeConfig, load_section
from src.volume.core import ModalitySample
from src.volume.io import read_label_volume, read_volume, write_label_volume, write_volume

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class Manifest:
    """Subject list of a dataset directory; entry paths are relative to `root`."""

    root: str
    seed: Optional[int]
    subjects: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def subject_ids(self) -> List[str]:
        return [entry["id"] for entry in self.subjects]

    def entry(self, subject_id: str) -> Dict[str, Any]:
        for entry in self.subjects:
            if entry["id"] == subject_id:
                return entry
        raise KeyError(f"subject {subject_id} not in manifest {self.root}")

    def load(self, subject_id: str) -> ModalitySample:
        """Read one subject's four volumes."""
        entry = self.entry(subject_id)
        paths = {key: os.path.join(self.root, entry[key]) for key in ("t1w", "fa", "precise", "coarse")}
        provenance = entry.get("provenance", "phantom" if self.seed is not None else "imported")
        return ModalitySample(subject_id, read_volume(paths["t1w"]), read_volume(paths["fa"]),
                              read_label_volume(paths["precise"]), read_label_volume(paths["coarse"]),
                              provenance=provenance)


def read_manifest(path: str) -> Manifest:
    manifest_path = os.path.join(path, MANIFEST_NAME) if os.path.isdir(path) else path
    with open(manifest_path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return Manifest(os.path.dirname(os.path.abspath(manifest_path)), data.get("seed"), data["subjects"])


def write_sample(sample: ModalitySample, out_dir: str) -> Dict[str, str]:
    """Persist a subject under `out_dir/<id>/`; returns manifest-relative paths."""
    subject_dir = os.path.join(out_dir, sample.subject_id)
    write_volume(sample.t1w, os.path.join(subject_dir, "t1w"))
    write_volume(sample.fa, os.path.join(subject_dir, "fa"))
    write_label_volume(sample.precise, os.path.join(subject_dir, "precise"))
    write_label_volume(sample.coarse, os.path.join(subject_dir, "coarse"))
    rel = sample.subject_id
    return {
        "id": sample.subject_id,
        "t1w": f"{rel}/t1w.json",
        "fa": f"{rel}/fa.json",
        "precise": f"{rel}/precise/labels.json",
        "coarse": f"{rel}/coarse/labels.json",
    }


def generate_dataset(cfg: Optional[PhantomConfig], n_subjects: int, out_dir: str, with_streamlines: bool = False,
                     voxelize_cfg: Optional[VoxelizeConfig] = None, progress: bool = True,
                     config_path: str = DEFAULT_CONFIG_PATH) -> Manifest:
    """Write `n_subjects` phantoms plus `manifest.json`; a pure function of (cfg, n).

    Without `cfg` the `phantom` section of `config_path` is used, and tractography-mode
    coarse labels read its `voxelize` section.
    """
    if cfg is None:
        cfg = load_section(config_path, "phantom")
        if voxelize_cfg is None:
            voxelize_cfg = load_section(config_path, "voxelize")
    if n_subjects < 1:
        raise ValueError(f"need at least one subject, got {n_subjects}")
    os.makedirs(out_dir, exist_ok=True)
    logger.info(f"Generating {n_subjects} phantom subjects (seed {cfg.seed}) into {out_dir}")

    entries = []
    for index in tqdm(range(n_subjects), desc="phantoms", disable=not progress):
        sample = generate_phantom(cfg, index, voxelize_cfg)
        entry = write_sample(sample, out_dir)
        agreement = coarse_agreement(sample)
        mean_agreement = sum(agreement.values()) / len(agreement)
        if not 0.4 <= mean_agreement <= 0.9:
            logger.warning(f"{sample.subject_id}: coarse/precise Dice {mean_agreement:.3f} outside [0.4, 0.9]")
        entry["agreement"] = {name: round(score, 6) for name, score in agreement.items()}
        if with_streamlines:
            streamline_path = os.path.join(out_dir, sample.subject_id, "streamlines.jsonl")
            write_streamlines(phantom_streamlines(cfg, index), streamline_path)
            entry["streamlines"] = f"{sample.subject_id}/streamlines.jsonl"
        entries.append(entry)

    manifest = {"seed": cfg.seed, "subjects": entries}
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    logger.info(f"Wrote manifest with {len(entries)} subjects to {manifest_path}")
    return Manifest(os.path.abspath(out_dir), cfg.seed, entries)
