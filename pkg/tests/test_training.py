import json
import os

import numpy as np
import pytest
import torch
from torch import optim
from torch.utils.data import DataLoader

from src.losses import total_loss
from src.model import DCLNet, dclnet_forward
from src.training import (
    ABLATION_ROWS,
    SliceDataset,
    augment_slice,
    evaluate_model,
    flip_group,
    make_folds,
    pad_to_multiple,
    predict_subject,
    run_ablation_matrix,
    run_epoch,
    train_model,
)
from src.phantom import generate_dataset
from src.utils.config import AugmentConfig, PhantomConfig, TrainConfig
from src.volume import Geometry, Volume3D, extract_axial_slices


class TestFolds:
    def test_partition(self):
        ids = [f"sub-{i:03d}" for i in range(10)]
        folds = make_folds(ids, 5, seed=4)
        assert [len(val) for _, val in folds] == [2] * 5
        all_val = [s for _, val in folds for s in val]
        assert sorted(all_val) == ids
        for train, val in folds:
            assert not set(train) & set(val) and len(train) == 8

    def test_uneven_sizes_differ_by_one(self):
        sizes = [len(val) for _, val in make_folds([str(i) for i in range(13)], 5)]
        assert max(sizes) - min(sizes) <= 1

    def test_deterministic_per_seed(self):
        ids = [str(i) for i in range(12)]
        assert make_folds(ids, 5, seed=1) == make_folds(list(reversed(ids)), 5, seed=1)
        assert make_folds(ids, 5, seed=1) != make_folds(ids, 5, seed=2)

    def test_too_few_subjects(self):
        with pytest.raises(ValueError, match="at least"):
            make_folds(["a", "b", "c"], 5)


class TestAugment:
    @pytest.fixture
    def group(self, small_phantom_config):
        from src.phantom import generate_phantom
        return extract_axial_slices(generate_phantom(small_phantom_config, 0))[16]

    def test_double_flip_is_identity(self, group, rng):
        cfg = AugmentConfig(brightness=0.0, contrast=0.0, hue=0.0)
        twice = augment_slice(augment_slice(group, cfg, rng, force_flip=True), cfg, rng, force_flip=True)
        for name in ("t1w", "fa", "precise", "coarse"):
            assert np.array_equal(getattr(twice, name).data, getattr(group, name).data)

    def test_flip_moves_everything_together(self, group):
        flipped = flip_group(group)
        for name in ("t1w", "fa", "precise", "coarse"):
            assert np.array_equal(getattr(flipped, name).data, getattr(group, name).data[:, ::-1, :])

    def test_zero_amplitude_keeps_intensities(self, group, rng):
        cfg = AugmentConfig(flip_prob=0.0, brightness=0.0, contrast=0.0, hue=0.0)
        out = augment_slice(group, cfg, rng)
        assert np.array_equal(out.t1w.data, group.t1w.data)
        assert np.array_equal(out.fa.data, group.fa.data)

    def test_labels_stay_binary(self, group, rng):
        cfg = AugmentConfig(flip_prob=0.5, brightness=0.3, contrast=0.3, hue=0.3)
        for _ in range(10):
            out = augment_slice(group, cfg, rng)
            for labels in (out.precise.data, out.coarse.data):
                assert set(np.unique(labels)) <= {0.0, 1.0}
            assert not np.array_equal(out.t1w.data, group.t1w.data)


class TestSliceDataset:
    def test_items(self, phantom_cohort):
        samples = [phantom_cohort.load(sid) for sid in phantom_cohort.subject_ids[:2]]
        dataset = SliceDataset(samples)
        assert len(dataset) == 64
        item = dataset[10]
        assert item["t1w"].shape == (1, 32, 32) and item["precise"].shape == (4, 32, 32)
        assert item["k"] == 10

    def test_label_noise_only_touches_precise(self, phantom_cohort):
        sample = phantom_cohort.load(phantom_cohort.subject_ids[0])
        clean, noisy = SliceDataset([sample]), SliceDataset([sample], label_noise_flip_rate=0.3)
        precise_clean = torch.stack([clean[i]["precise"] for i in range(len(clean))])
        precise_noisy = torch.stack([noisy[i]["precise"] for i in range(len(noisy))])
        assert not torch.equal(precise_clean, precise_noisy)
        for i in range(len(clean)):
            assert torch.equal(clean[i]["coarse"], noisy[i]["coarse"])
            assert torch.equal(clean[i]["t1w"], noisy[i]["t1w"])

    def test_augmentation_repeats_per_epoch(self, phantom_cohort):
        sample = phantom_cohort.load(phantom_cohort.subject_ids[0])
        dataset = SliceDataset([sample], AugmentConfig(), seed=5)
        first = dataset[3]["t1w"]
        assert torch.equal(first, dataset[3]["t1w"])
        dataset.set_epoch(1)
        assert not torch.equal(first, dataset[3]["t1w"])

    def test_pad_to_multiple(self):
        array = np.arange(2 * 30 * 20, dtype=np.float32).reshape(2, 30, 20)
        padded, size = pad_to_multiple(array)
        assert padded.shape == (2, 32, 32) and size == (30, 20)
        assert np.array_equal(padded[:, :30, :20], array)
        same, _ = pad_to_multiple(padded)
        assert same is padded


def _loader(phantom_cohort, n=2, batch_size=8):
    samples = [phantom_cohort.load(sid) for sid in phantom_cohort.subject_ids[:n]]
    return DataLoader(SliceDataset(samples), batch_size=batch_size, shuffle=False)


class TestLoop:
    def test_zero_learning_rate_keeps_parameters(self, phantom_cohort, tiny_model_config):
        model = DCLNet(tiny_model_config)
        before = [p.detach().clone() for p in model.parameters()]
        run_epoch(model, _loader(phantom_cohort, n=1), optim.SGD(model.parameters(), lr=0.0, momentum=0.9))
        assert all(torch.equal(a, b) for a, b in zip(before, model.parameters()))

    def test_single_step_descends(self, phantom_cohort, tiny_model_config):
        cfg = tiny_model_config.model_copy(update={"decoder_dropout": 0.0})
        batch = next(iter(_loader(phantom_cohort, n=1, batch_size=8)))
        drops = []
        for seed in range(5):
            torch.manual_seed(seed)
            model = DCLNet(cfg)
            optimizer = optim.SGD(model.parameters(), lr=1e-3, momentum=0.9)
            pair = dclnet_forward(model, batch["t1w"], batch["fa"], mode="train")
            before = total_loss(pair.p1, pair.p2, batch["precise"], batch["coarse"]).total
            optimizer.zero_grad()
            before.backward()
            optimizer.step()
            with torch.no_grad():
                pair = dclnet_forward(model, batch["t1w"], batch["fa"], mode="train")
                after = total_loss(pair.p1, pair.p2, batch["precise"], batch["coarse"]).total
            drops.append(before.item() - after.item())
        assert np.mean(drops) > 0

    def test_eval_pass_has_no_side_effects(self, phantom_cohort, tiny_model_config):
        model = DCLNet(tiny_model_config)
        loader = _loader(phantom_cohort, n=1)
        assert run_epoch(model, loader) == run_epoch(model, loader)


class TestTrainModel:
    def test_one_epoch_run(self, phantom_cohort, tiny_model_config, quick_train_config, tmp_path):
        record = train_model(phantom_cohort, quick_train_config, str(tmp_path), tiny_model_config, progress=False)
        assert len(record.train_ids) == 4 and len(record.val_ids) == 1
        assert os.path.exists(record.best_checkpoint) and os.path.exists(record.last_checkpoint)
        lines = (tmp_path / "train_log.jsonl").read_text().strip().splitlines()
        entry = json.loads(lines[0])
        assert set(entry) == {"epoch", "dice_loss", "bce_loss", "coarse_loss", "total", "val_dice"}
        assert entry["coarse_loss"] > 0
        assert record.best_val_dice == max(e["val_dice"] for e in record.epochs)

    def test_epoch_zero_is_reproducible(self, phantom_cohort, tiny_model_config, quick_train_config, tmp_path):
        a = train_model(phantom_cohort, quick_train_config, str(tmp_path / "a"), tiny_model_config, progress=False)
        b = train_model(phantom_cohort, quick_train_config, str(tmp_path / "b"), tiny_model_config, progress=False)
        assert a.epochs[0]["total"] == b.epochs[0]["total"]

    def test_without_dcl_coarse_term_is_zero(self, phantom_cohort, tiny_model_config, quick_train_config, tmp_path):
        cfg = quick_train_config.model_copy(update={"use_dcl": False})
        record = train_model(phantom_cohort, cfg, str(tmp_path), tiny_model_config, fold=2, progress=False)
        assert record.fold == 2
        assert all(e["coarse_loss"] == 0.0 for e in record.epochs)


class TestInference:
    def test_prediction_geometry_and_threshold(self, phantom_cohort, tiny_model_config):
        sample = phantom_cohort.load(phantom_cohort.subject_ids[0])
        model = DCLNet(tiny_model_config)
        prediction = predict_subject(model, sample.t1w, sample.fa, class_names=sample.precise.class_names)
        assert prediction.labels.geometry == sample.geometry
        probs = np.stack([p.data for p in prediction.probabilities])
        assert np.array_equal(prediction.labels.channels, (probs >= 0.5).astype(np.uint8))

    def test_non_divisible_slices_are_padded_and_cropped(self, tiny_model_config, rng):
        geometry = Geometry((30, 20, 3))
        t1w = Volume3D(geometry, rng.random((30, 20, 3)))
        fa = Volume3D(geometry, rng.random((30, 20, 3)))
        prediction = predict_subject(DCLNet(tiny_model_config), t1w, fa)
        assert prediction.labels.geometry == geometry
        assert prediction.probabilities[0].dims == (30, 20, 3)

    def test_evaluation_is_deterministic(self, phantom_cohort, tiny_model_config):
        model = DCLNet(tiny_model_config)
        ids = phantom_cohort.subject_ids[:2]
        first = evaluate_model(model, phantom_cohort, ids, progress=False).to_dict()
        assert first == evaluate_model(model, phantom_cohort, ids, progress=False).to_dict()
        assert set(first["subjects"]) == set(ids)


def test_ablation_matrix(phantom_cohort, tiny_model_config, quick_train_config, tmp_path):
    frame = run_ablation_matrix(phantom_cohort, quick_train_config, str(tmp_path), tiny_model_config, progress=False)
    assert frame["row"].tolist() == [name for name, _ in ABLATION_ROWS]
    assert frame[["use_fem", "use_aem", "use_dcl"]].values.tolist() == [
        [False, False, False], [True, False, False], [False, True, False], [True, True, False], [True, True, True]]
    table = json.loads((tmp_path / "table3.json").read_text())
    assert table["details"]["mem_dcl"]["runs"][0]["final_coarse_loss"] > 0
    assert table["details"]["mem"]["runs"][0]["final_coarse_loss"] == 0
    assert (tmp_path / "table3.csv").exists()
    # paired comparison: every row validated on the same subjects
    val_sets = {json.dumps(sorted(json.loads((tmp_path / name / "fold_0" / "metrics.json").read_text())["subjects"]))
                for name, _ in ABLATION_ROWS}
    assert len(val_sets) == 1


@pytest.mark.slow
def test_phantom_training_reaches_target_dice(tmp_path):
    manifest = generate_dataset(PhantomConfig(seed=1), 40, str(tmp_path / "data"), progress=False)
    cfg = TrainConfig.preset("desk", seed=1)
    record = train_model(manifest, cfg, str(tmp_path / "run"), progress=False)
    result = evaluate_model(record.best_checkpoint, manifest, record.val_ids, progress=False)
    assert result.aggregate["mean"]["dice"]["mean"] >= 0.80


@pytest.mark.slow
def test_consistency_loss_holds_up_under_label_noise(tmp_path, tiny_model_config):
    manifest = generate_dataset(PhantomConfig(dims=(32, 32, 32), radius_range=(1.5, 2.5), seed=5), 10,
                                str(tmp_path / "data"), progress=False)
    dice = {"mem": [], "mem_dcl": []}
    for seed in (0, 1, 2):
        base = TrainConfig(epochs=10, batch_size=8, folds=5, seed=seed, learning_rate=0.01,
                           label_noise_flip_rate=0.1, ablation_folds=[0])
        frame = run_ablation_matrix(manifest, base, str(tmp_path / f"seed_{seed}"), tiny_model_config,
                                    rows=["mem", "mem_dcl"], progress=False)
        scores = frame.set_index("row")["dice_mean"]
        for row in dice:
            dice[row].append(float(scores[row]))
    assert np.mean(dice["mem_dcl"]) >= np.mean(dice["mem"]) - 0.02
