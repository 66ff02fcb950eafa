"""Affine geometry, bilinear warping, and keypoint-aware augmentation."""

import math

import numpy as np
import pytest

from hgnet.synth import FLIP_PAIRS, default_skeleton, generate_sample
from hgnet.transforms import (
    AugmentConfig,
    apply_affine,
    augment,
    build_transform,
    crop_and_resize,
    flip_permutation,
    invert_affine,
    warp_affine,
)


def test_identity_transform():
    # scale R/200 makes the window exactly R px; centering it on R/2
    # gives the identity map.
    m = build_transform((32.0, 32.0), 64 / 200.0, 0.0, resolution=64)
    pts = np.array([[0.0, 0.0], [10.0, 50.0], [63.0, 1.0]])
    np.testing.assert_allclose(apply_affine(m, pts), pts, atol=1e-9)


def test_center_always_maps_to_output_center():
    for center, scale, rot in [((10.0, 200.0), 0.7, 0.0), ((-5.0, 3.0), 2.0, 37.0), ((100.0, 50.0), 1.0, -90.0)]:
        m = build_transform(center, scale, rot, resolution=64)
        out = apply_affine(m, np.array([center]))
        np.testing.assert_allclose(out, [[32.0, 32.0]], atol=1e-9)


def test_rotation_convention():
    # +90 degrees in the y-down image frame: a point right of center
    # lands below it.
    m = build_transform((0.0, 0.0), 1.0, 90.0, resolution=200)
    out = apply_affine(m, np.array([[10.0, 0.0]]))[0]
    np.testing.assert_allclose(out, [100.0, 110.0], atol=1e-9)


def test_invert_affine_round_trips_points():
    rng = np.random.default_rng(0)
    m = build_transform((17.0, -4.0), 1.3, 23.0, resolution=128)
    pts = rng.uniform(-100, 100, size=(50, 2))
    back = apply_affine(invert_affine(m), apply_affine(m, pts))
    np.testing.assert_allclose(back, pts, atol=1e-9)


def test_invert_affine_rejects_singular():
    with pytest.raises(ValueError):
        invert_affine(np.zeros((2, 3)))


def test_warp_affine_exact_on_linear_ramp():
    # Bilinear interpolation reproduces affine-linear images exactly, so
    # interior pixels must match the analytic field.
    h = w = 40
    ys, xs = np.mgrid[0:h, 0:w]
    img = (3.0 + 0.5 * xs + 0.25 * ys).astype(np.float64)
    m = build_transform((19.0, 21.0), 30 / 200.0, 10.0, resolution=32)
    warped = warp_affine(img, m, 32)
    inv = invert_affine(m)
    out_pts = np.stack(np.mgrid[0:32, 0:32][::-1], axis=-1).reshape(-1, 2).astype(np.float64) + 0.5
    src = apply_affine(inv, out_pts).reshape(32, 32, 2)
    analytic = 3.0 + 0.5 * (src[..., 0] - 0.5) + 0.25 * (src[..., 1] - 0.5)
    interior = (
        (src[..., 0] > 1.0) & (src[..., 0] < w - 1.0) & (src[..., 1] > 1.0) & (src[..., 1] < h - 1.0)
    )
    assert interior.sum() > 200
    # warp_affine computes in float32; exactness holds to that precision.
    np.testing.assert_allclose(warped[interior], analytic[interior], atol=1e-5)


def test_warp_affine_fills_outside_with_zero():
    img = np.ones((16, 16), dtype=np.float32)
    # Window far off the image: everything samples outside.
    m = build_transform((1000.0, 1000.0), 16 / 200.0, 0.0, resolution=16)
    np.testing.assert_array_equal(warp_affine(img, m, 16), np.zeros((16, 16), dtype=np.float32))


def test_warp_affine_handles_channels():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, size=(20, 20, 3))
    m = build_transform((10.0, 10.0), 20 / 200.0, 0.0, resolution=20)
    warped = warp_affine(img, m, 20)
    assert warped.shape == (20, 20, 3)
    np.testing.assert_allclose(warped[2:-2, 2:-2], img[2:-2, 2:-2], atol=1e-6)


def test_crop_and_resize_returns_image_and_transform():
    rng = np.random.default_rng(2)
    img = rng.uniform(0, 255, size=(48, 64, 3))
    crop, m = crop_and_resize(img, (30.0, 20.0), 0.2, 32)
    assert crop.shape == (32, 32, 3)
    np.testing.assert_allclose(apply_affine(m, np.array([[30.0, 20.0]])), [[16.0, 16.0]], atol=1e-9)


def _sample(seed=0):
    return generate_sample(default_skeleton(), index=0, image_size=96, seed=seed)


def test_augment_is_rng_deterministic():
    s = _sample()
    cfg = AugmentConfig()
    a = augment(s.image, s.annotation, np.random.default_rng(7), cfg, 32, FLIP_PAIRS)
    b = augment(s.image, s.annotation, np.random.default_rng(7), cfg, 32, FLIP_PAIRS)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.joints, b.joints)
    np.testing.assert_array_equal(a.present, b.present)


def test_augment_flip_mirrors_and_permutes():
    s = _sample(3)
    no_flip = AugmentConfig(rotation_max_deg=0.0, scale_jitter=(1.0, 1.0), flip_prob=0.0)
    always = AugmentConfig(rotation_max_deg=0.0, scale_jitter=(1.0, 1.0), flip_prob=1.0)
    plain = augment(s.image, s.annotation, np.random.default_rng(0), no_flip, 64, FLIP_PAIRS)
    flipped = augment(s.image, s.annotation, np.random.default_rng(0), always, 64, FLIP_PAIRS)
    np.testing.assert_array_equal(flipped.image, plain.image[:, ::-1])
    perm = flip_permutation(FLIP_PAIRS, 14)
    for j in range(14):
        if not (plain.present[j] and flipped.present[perm[j]]):
            continue
        assert flipped.joints[perm[j], 0] == pytest.approx(64.0 - plain.joints[j, 0], abs=1e-6)
        assert flipped.joints[perm[j], 1] == pytest.approx(plain.joints[j, 1], abs=1e-6)


def test_augment_marks_outside_joints_absent():
    s = _sample(5)
    ann = s.annotation
    # Zoom hard into the figure center: limbs must leave the window.
    tight = type(ann)(
        image_id=ann.image_id,
        center=ann.center,
        scale=ann.scale * 0.15,
        joints=ann.joints,
        present=ann.present,
        visible=ann.visible,
        norm_length=ann.norm_length,
    )
    cfg = AugmentConfig(rotation_max_deg=0.0, scale_jitter=(1.0, 1.0), flip_prob=0.0)
    out = augment(s.image, tight, np.random.default_rng(0), cfg, 32, FLIP_PAIRS)
    assert out.present.sum() < ann.present.sum()
    inside = (out.joints[:, 0] >= 0) & (out.joints[:, 0] <= 32) & (out.joints[:, 1] >= 0) & (out.joints[:, 1] <= 32)
    assert (~out.present | inside).all()


def test_augment_rotation_bounded():
    s = _sample(1)
    cfg = AugmentConfig(rotation_max_deg=30.0, scale_jitter=(1.0, 1.0), flip_prob=0.0)
    ann = s.annotation
    for seed in range(8):
        out = augment(s.image, ann, np.random.default_rng(seed), cfg, 32, FLIP_PAIRS)
        # Recover the applied rotation from how the x axis maps.
        d = out.transform[:, 0]
        angle = math.degrees(math.atan2(d[1], d[0]))
        assert abs(angle) <= 30.0 + 1e-9


def test_flip_permutation_involutive_required():
    perm = flip_permutation(FLIP_PAIRS, 14)
    np.testing.assert_array_equal(perm[perm], np.arange(14))
    with pytest.raises(ValueError):
        flip_permutation([(0, 1), (1, 2)], 3)


def test_augment_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(flip_prob=1.5).validate()
    with pytest.raises(ValueError):
        AugmentConfig(scale_jitter=(1.5, 0.5)).validate()
