import numpy as np
import pytest

from src.metrics import (
    ConfusionCounts,
    aggregate_reports,
    ahd,
    confusion_counts,
    evaluate_case,
    overlap_scores,
    plot_class_metrics,
    plot_overlay,
    plot_training_curves,
)
from src.utils.errors import GeometryError
from src.volume.core import Geometry, LabelVolume, Volume3D
from tests.helpers import random_labels


def brute_force_ahd(a, b):
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


class TestOverlap:
    def test_hand_computed(self):
        scores = overlap_scores(ConfusionCounts(tp=1, fp=1, fn=1, tn=0))
        assert scores["dice"] == pytest.approx(0.5)
        assert scores["jaccard"] == pytest.approx(1 / 3)
        assert scores["precision"] == pytest.approx(0.5)
        assert scores["recall"] == pytest.approx(0.5)

    def test_empty_empty_is_undefined(self):
        scores = overlap_scores(ConfusionCounts(0, 0, 0, 27))
        assert all(v is None for v in scores.values())

    def test_contained_prediction_has_full_precision(self):
        truth = np.zeros((1, 5, 5, 5), dtype=np.uint8)
        truth[0, 1:4, 1:4, 1:4] = 1
        pred = np.zeros_like(truth)
        pred[0, 2, 2, 2] = 1
        g = Geometry((5, 5, 5))
        [c] = confusion_counts(LabelVolume(g, pred, ["a"]), LabelVolume(g, truth, ["a"]))
        assert overlap_scores(c)["precision"] == 1.0

    def test_counts_match_voxel_loop(self, rng):
        pred, truth = random_labels(rng, (6, 6, 6)), random_labels(rng, (6, 6, 6))
        counts = confusion_counts(pred, truth)
        for c, cc in enumerate(counts):
            tp = fp = fn = tn = 0
            for p, t in zip(pred.channels[c].ravel(), truth.channels[c].ravel()):
                tp += p and t
                fp += p and not t
                fn += t and not p
                tn += not p and not t
            assert (cc.tp, cc.fp, cc.fn, cc.tn) == (tp, fp, fn, tn)
            assert cc.total == 216

    def test_jaccard_dice_identity(self, rng):
        for _ in range(200):
            density = rng.uniform(0.05, 0.6)
            report = evaluate_case(random_labels(rng, density=density), random_labels(rng, density=density))
            for name in report.class_names:
                dice, jaccard = report.scores[name]["dice"], report.scores[name]["jaccard"]
                assert abs(jaccard - dice / (2 - dice)) <= 1e-9


class TestAHD:
    def test_single_pair(self):
        assert ahd(np.array([[0, 0, 0]]), np.array([[3, 0, 0]])) == pytest.approx(3.0)

    def test_spacing_in_mm(self):
        assert ahd(np.array([[0, 0, 0]]), np.array([[0, 0, 2]]), spacing=(1.0, 1.0, 2.5)) == pytest.approx(5.0)

    def test_identity_symmetry_and_brute_force(self, rng):
        for _ in range(20):
            a = rng.integers(0, 12, (int(rng.integers(1, 500)), 3))
            b = rng.integers(0, 12, (int(rng.integers(1, 500)), 3))
            assert ahd(a, a) == 0.0
            assert ahd(a, b) == pytest.approx(ahd(b, a), rel=1e-12)
            assert ahd(a, b) == pytest.approx(brute_force_ahd(a.astype(float), b.astype(float)), rel=1e-12)

    def test_empty_set_is_undefined(self):
        assert ahd(np.zeros((0, 3)), np.array([[1, 1, 1]])) is None


class TestReports:
    def test_perfect_prediction(self, rng):
        truth = random_labels(rng, classes=("CN II", "CN III", "CN V", "CN VII/VIII"))
        report = evaluate_case(truth, truth)
        for name in truth.class_names:
            assert report.scores[name]["dice"] == 1.0 and report.scores[name]["ahd"] == 0.0
        assert report.mean["dice"] == 1.0 and report.mean["jaccard"] == 1.0

    def test_undefined_class_excluded_from_means(self):
        g = Geometry((4, 4, 4))
        truth = np.zeros((2, 4, 4, 4), dtype=np.uint8)
        truth[0, 1, 1, 1] = 1
        report = evaluate_case(LabelVolume(g, truth, ["a", "b"]), LabelVolume(g, truth, ["a", "b"]))
        assert report.undefined == ["b"]
        assert report.mean["dice"] == 1.0

    def test_to_dict_layout(self, rng):
        report = evaluate_case(random_labels(rng), random_labels(rng)).to_dict()
        assert set(report) == {"classes", "mean", "undefined"}
        assert set(report["classes"]["a"]) == {"dice", "jaccard", "precision", "recall", "ahd", "tp", "fp", "fn"}

    def test_geometry_mismatch_cites_dims(self, rng):
        with pytest.raises(GeometryError, match=r"dims=\(10, 10, 10\)"):
            evaluate_case(random_labels(rng), random_labels(rng, dims=(10, 10, 9)))

    def test_aggregate_is_mean_of_subject_means(self, rng):
        reports = [evaluate_case(random_labels(rng), random_labels(rng)) for _ in range(4)]
        aggregate = aggregate_reports(reports)
        expected = np.mean([r.mean["dice"] for r in reports])
        assert aggregate["mean"]["dice"]["mean"] == pytest.approx(expected)
        assert aggregate["mean"]["dice"]["sd"] == pytest.approx(np.std([r.mean["dice"] for r in reports], ddof=1))
        assert aggregate["subjects"] == 4


class TestPlots:
    def test_training_curves(self, tmp_path):
        records = [{"epoch": e, "dice_loss": 1.0 / (e + 1), "bce_loss": 0.5, "coarse_loss": 0.2,
                    "total": 1.7, "val_dice": 0.1 * e} for e in range(3)]
        path = plot_training_curves(records, str(tmp_path / "curves.svg"))
        assert (tmp_path / "curves.svg").stat().st_size > 0 and path.endswith(".svg")

    def test_class_bars(self, tmp_path, rng):
        report = evaluate_case(random_labels(rng), random_labels(rng)).to_dict()
        plot_class_metrics(report, str(tmp_path / "bars.png"))
        assert (tmp_path / "bars.png").read_bytes()[:4] == b"\x89PNG"

    def test_overlay(self, tmp_path, rng):
        geometry = Geometry((10, 12, 6))
        volume = Volume3D(geometry, rng.random(geometry.dims).astype(np.float32))
        truth = random_labels(rng, geometry=geometry, density=0.1)
        pred = random_labels(rng, geometry=geometry, density=0.1)
        path = plot_overlay(volume, truth, pred, None, str(tmp_path / "overlay.png"))
        assert (tmp_path / "overlay.png").read_bytes()[:4] == b"\x89PNG" and path.endswith("overlay.png")
        plot_overlay(volume, truth, pred, 5, str(tmp_path / "overlay.svg"))
        assert (tmp_path / "overlay.svg").stat().st_size > 0

    def test_overlay_rejects_bad_inputs(self, tmp_path, rng):
        geometry = Geometry((10, 12, 6))
        volume = Volume3D(geometry, np.zeros(geometry.dims, dtype=np.float32))
        truth = random_labels(rng, geometry=geometry)
        with pytest.raises(ValueError):
            plot_overlay(volume, truth, truth, 6, str(tmp_path / "x.png"))
        with pytest.raises(GeometryError):
            plot_overlay(volume, truth, random_labels(rng, dims=(10, 12, 7)), 0, str(tmp_path / "x.png"))
