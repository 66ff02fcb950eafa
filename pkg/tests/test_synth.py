"""Synthetic figure generator: determinism, rates, and export."""

import numpy as np
import pytest

from hgnet.synth import (
    FLIP_PAIRS,
    JOINT_NAMES,
    default_skeleton,
    export,
    generate,
    generate_sample,
    load_dataset,
)
from hgnet.transforms import apply_affine, build_transform


def test_same_seed_same_dataset():
    a = generate(default_skeleton(), count=4, image_size=64, seed=2)
    b = generate(default_skeleton(), count=4, image_size=64, seed=2)
    for sa, sb in zip(a.samples, b.samples):
        np.testing.assert_array_equal(sa.image, sb.image)
        np.testing.assert_array_equal(sa.annotation.joints, sb.annotation.joints)


def test_different_indices_differ():
    a = generate_sample(default_skeleton(), index=0, image_size=64, seed=2)
    b = generate_sample(default_skeleton(), index=1, image_size=64, seed=2)
    assert not np.array_equal(a.image, b.image)


def test_skeleton_is_fourteen_named_joints():
    assert len(JOINT_NAMES) == 14
    assert JOINT_NAMES[0] == "head_top"
    assert JOINT_NAMES[1] == "neck"
    perm_targets = {j for pair in FLIP_PAIRS for j in pair}
    assert len(perm_targets) == 12  # head_top and neck are self-paired


def test_zero_occlusion_means_all_present_joints_visible():
    ds = generate(default_skeleton(), count=60, image_size=64, seed=3,
                  occlusion_prob=0.0, truncation_prob=0.0)
    for s in ds.samples:
        np.testing.assert_array_equal(s.annotation.visible, s.annotation.present)
        assert s.annotation.present.all()


def test_occlusion_rate_matches_probability():
    ds = generate(default_skeleton(), count=1000, image_size=64, seed=4,
                  occlusion_prob=0.3, truncation_prob=0.0)
    occluded = sum(
        1 for s in ds.samples if (s.annotation.present & ~s.annotation.visible).any()
    )
    assert occluded / 1000 == pytest.approx(0.3, abs=0.03)


def test_truncation_removes_joints():
    ds = generate(default_skeleton(), count=100, image_size=64, seed=5,
                  occlusion_prob=0.0, truncation_prob=1.0)
    truncated = sum(1 for s in ds.samples if not s.annotation.present.all())
    assert truncated >= 80
    for s in ds.samples:
        size = s.image.shape[0]
        j = s.annotation.joints
        outside = ~(
            (j[:, 0] >= 0) & (j[:, 0] < size) & (j[:, 1] >= 0) & (j[:, 1] < size)
        )
        np.testing.assert_array_equal(s.annotation.present, ~outside)


def test_norm_length_is_head_segment():
    s = generate_sample(default_skeleton(), index=3, image_size=96, seed=6)
    ann = s.annotation
    want = float(np.linalg.norm(ann.joints[0] - ann.joints[1]))
    assert ann.norm_length == pytest.approx(want, rel=1e-9)


def test_crop_window_contains_present_joints():
    # center/scale must frame the figure: every present joint lands
    # inside the standard crop with margin to spare.
    for idx in range(8):
        s = generate_sample(default_skeleton(), index=idx, image_size=96, seed=7,
                            truncation_prob=0.0)
        ann = s.annotation
        m = build_transform(tuple(ann.center), ann.scale, 0.0, resolution=64)
        pts = apply_affine(m, ann.joints[ann.present])
        assert (pts >= 0).all() and (pts <= 64).all()


def test_occluder_covers_target_joint():
    found = 0
    for idx in range(40):
        s = generate_sample(default_skeleton(), index=idx, image_size=96, seed=8,
                            occlusion_prob=1.0, truncation_prob=0.0)
        hidden = s.annotation.present & ~s.annotation.visible
        if hidden.any():
            found += 1
    assert found == 40  # occlusion_prob 1 and no truncation: always applicable


def test_export_round_trip(tmp_path, small_dataset):
    out = tmp_path / "ds"
    ann_path = export(small_dataset, out)
    assert ann_path == out / "annotations.jsonl"
    lines = ann_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == len(small_dataset) + 1  # header + one per sample
    aset, images = load_dataset(ann_path)
    assert len(images) == len(small_dataset)
    for orig, loaded_ann, img in zip(small_dataset.samples, aset.samples, images):
        np.testing.assert_array_equal(orig.image, img)
        np.testing.assert_allclose(orig.annotation.joints, loaded_ann.joints, atol=5e-7)
    # Export must not mutate the in-memory dataset: image ids stay
    # relative to nothing, and a second export is self-consistent.
    ids_before = [s.annotation.image_id for s in small_dataset.samples]
    again = export(small_dataset, tmp_path / "ds2")
    assert [s.annotation.image_id for s in small_dataset.samples] == ids_before
    aset2, images2 = load_dataset(again)
    np.testing.assert_array_equal(images2[0], images[0])


def test_generate_validates_arguments():
    with pytest.raises(ValueError):
        generate(default_skeleton(), count=0, image_size=64, seed=0)
    with pytest.raises(ValueError):
        generate(default_skeleton(), count=1, image_size=16, seed=0)


def test_images_are_uint8_rgb():
    s = generate_sample(default_skeleton(), index=0, image_size=64, seed=9)
    assert s.image.dtype == np.uint8
    assert s.image.shape == (64, 64, 3)
    assert s.image.max() > 40  # something was drawn
