import json
import os

import numpy as np
import pytest
from scipy import ndimage

from src.phantom import (
    build_tubes,
    coarse_agreement,
    degrade_to_coarse,
    flip_boundary,
    generate_dataset,
    generate_phantom,
    phantom_streamlines,
    read_manifest,
)
from src.tractlabels import read_streamlines
from src.utils.config import PhantomConfig
from src.utils.errors import PhantomError


def test_generation_is_deterministic(small_phantom_config):
    a = generate_phantom(small_phantom_config, 2)
    b = generate_phantom(small_phantom_config, 2)
    assert a.t1w == b.t1w and a.fa == b.fa
    assert a.precise == b.precise and a.coarse == b.coarse


def test_subjects_differ(small_phantom_config):
    a = generate_phantom(small_phantom_config, 0)
    b = generate_phantom(small_phantom_config, 1)
    assert a.subject_id == "sub-000" and b.subject_id == "sub-001"
    assert a.precise != b.precise


def test_sample_contents(small_phantom_config):
    sample = generate_phantom(small_phantom_config, 0)
    assert sample.geometry.dims == (32, 32, 32)
    assert sample.precise.class_names == small_phantom_config.classes
    assert all(sample.precise.channels[c].sum() > 0 for c in range(sample.precise.num_classes))
    nerve = sample.precise.channels.any(axis=0)
    assert 0.0 <= sample.fa.data.min() and sample.fa.data.max() <= 1.0
    tissue = sample.t1w.data != 0
    assert sample.fa.data[nerve].mean() > sample.fa.data[tissue & ~nerve].mean() + 0.3
    assert sample.t1w.data[nerve].mean() > sample.t1w.data[tissue & ~nerve].mean()


def test_tubes_are_mirrored(small_phantom_config):
    tubes = build_tubes(small_phantom_config, 0)
    assert len(tubes) == 2 * len(small_phantom_config.classes)
    nx = small_phantom_config.dims[0]
    for tube in tubes:
        if tube.side == "left":
            assert tube.centerline[:, 0].max() < nx / 2
        else:
            assert tube.centerline[:, 0].min() > nx / 2 - 1


def test_small_grid_rejected(small_phantom_config):
    with pytest.raises(PhantomError):
        generate_phantom(small_phantom_config.model_copy(update={"dims": (16, 32, 32)}), 0)


@pytest.fixture(scope="module")
def default_samples():
    cfg = PhantomConfig(seed=1)
    return [generate_phantom(cfg, index) for index in range(3)]


def test_coarse_agreement_in_band_at_defaults(default_samples):
    for sample in default_samples:
        for name, score in coarse_agreement(sample).items():
            assert 0.4 <= score <= 0.9, f"{sample.subject_id} {name}: {score:.3f}"


def test_each_class_is_a_left_right_pair(default_samples):
    for sample in default_samples:
        for c in range(sample.precise.num_classes):
            _, components = ndimage.label(sample.precise.channels[c])
            assert components == 2


def test_chiasm_joins_the_first_pair(small_phantom_config):
    cfg = small_phantom_config.model_copy(update={"chiasm": True})
    nx = cfg.dims[0]
    left, right = build_tubes(cfg, 0)[:2]
    assert left.centerline[:, 0].min() < (nx - 1) / 2 < left.centerline[:, 0].max()
    assert np.allclose(right.centerline[:, 0], nx - 1 - left.centerline[:, 0])
    assert np.array_equal(right.centerline[:, 1:], left.centerline[:, 1:])

    sample = generate_phantom(cfg, 0)
    counts = [ndimage.label(sample.precise.channels[c])[1] for c in range(sample.precise.num_classes)]
    assert counts == [1, 2, 2, 2]


def test_chiasm_is_off_by_default(small_phantom_config):
    assert not small_phantom_config.chiasm
    assert build_tubes(small_phantom_config, 0)[0].centerline[:, 0].max() < small_phantom_config.dims[0] / 2


def test_degrade_without_corruption_is_identity(small_phantom_config):
    sample = generate_phantom(small_phantom_config, 0)
    cfg = small_phantom_config.model_copy(update={"dilation_radius": 0, "flip_rate": 0.0, "max_translation": 0})
    assert degrade_to_coarse(sample.precise, cfg, seed=5) == sample.precise


def test_dilation_grows_labels(small_phantom_config):
    sample = generate_phantom(small_phantom_config, 0)
    cfg = small_phantom_config.model_copy(update={"flip_rate": 0.0, "max_translation": 0})
    coarse = degrade_to_coarse(sample.precise, cfg, seed=5)
    assert np.all(coarse.channels >= sample.precise.channels)
    assert coarse.channels.sum() > sample.precise.channels.sum()


def test_flip_boundary_leaves_deep_voxels(rng):
    mask = np.zeros((12, 12, 12), dtype=bool)
    mask[2:10, 2:10, 2:10] = True
    flipped = flip_boundary(mask, 0.49, rng)
    assert np.array_equal(flipped[4:8, 4:8, 4:8], mask[4:8, 4:8, 4:8])
    assert np.array_equal(flipped[0], mask[0])
    assert np.array_equal(flip_boundary(mask, 0.0, rng), mask)


def test_tractography_coarse_mode(small_phantom_config):
    cfg = small_phantom_config.model_copy(update={"coarse_mode": "tractography", "streamlines_per_tube": 6})
    sample = generate_phantom(cfg, 0)
    assert all(sample.coarse.channels[c].sum() > 0 for c in range(sample.coarse.num_classes))
    assert min(coarse_agreement(sample).values()) > 0.0


def test_streamlines_follow_classes(small_phantom_config):
    bundle = phantom_streamlines(small_phantom_config, 0)
    assert sorted(bundle.class_names) == sorted(small_phantom_config.classes)
    assert len(bundle) == 2 * len(small_phantom_config.classes) * small_phantom_config.streamlines_per_tube


def test_dataset_on_disk(tmp_path, small_phantom_config):
    manifest = generate_dataset(small_phantom_config, 3, str(tmp_path), with_streamlines=True, progress=False)
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["seed"] == small_phantom_config.seed
    assert [s["id"] for s in data["subjects"]] == ["sub-000", "sub-001", "sub-002"]
    assert set(data["subjects"][0]["agreement"]) == set(small_phantom_config.classes)

    reread = read_manifest(str(tmp_path))
    assert reread.subject_ids == manifest.subject_ids
    loaded = reread.load("sub-001")
    expected = generate_phantom(small_phantom_config, 1)
    assert loaded.t1w == expected.t1w and loaded.precise == expected.precise and loaded.coarse == expected.coarse

    bundle = read_streamlines(os.path.join(str(tmp_path), data["subjects"][0]["streamlines"]))
    assert len(bundle) == len(phantom_streamlines(small_phantom_config, 0))


def test_dataset_is_pure_function_of_config(tmp_path, small_phantom_config):
    generate_dataset(small_phantom_config, 2, str(tmp_path / "a"), progress=False)
    generate_dataset(small_phantom_config, 2, str(tmp_path / "b"), progress=False)
    for name in ("manifest.json", "sub-001/t1w.raw", "sub-001/coarse/labels.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
