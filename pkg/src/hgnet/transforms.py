"""Affine crop geometry and bilinear warping.

Coordinate convention, used everywhere in the package: pixel (row i,
col j) spans the unit square [j, j+1) x [i, i+1) and its center is at
(j + 0.5, i + 0.5). Points are (x, y) pairs in that continuous frame.
A square window of side `scale * 200` pixels centered on `center`,
rotated by `rotation` degrees, maps onto the `resolution`-sized crop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Side of the crop window in original-image pixels per unit of scale.
# The synthetic dataset writes scales against this same constant.
PIXELS_PER_SCALE = 200.0


def build_transform(center, scale, rotation, resolution):
    """2x3 affine taking original-image (x, y) to crop coordinates.

    The window center maps to (resolution/2, resolution/2); rotation is
    counterclockwise in degrees about the window center.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if resolution <= 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    side = scale * PIXELS_PER_SCALE
    k = resolution / side
    theta = np.deg2rad(rotation)
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = float(center[0]), float(center[1])
    half = resolution / 2.0
    # rows of [scale][rotate] then translate so center lands mid-crop
    m = np.array(
        [
            [k * c, -k * s, half - k * (c * cx - s * cy)],
            [k * s, k * c, half - k * (s * cx + c * cy)],
        ],
        dtype=np.float64,
    )
    return m


def invert_affine(m):
    """Exact inverse of a 2x3 affine map."""
    a, b, tx = m[0]
    c, d, ty = m[1]
    det = a * d - b * c
    if det == 0:
        raise ValueError("affine matrix is singular")
    inv = np.array(
        [
            [d / det, -b / det, (b * ty - d * tx) / det],
            [-c / det, a / det, (c * tx - a * ty) / det],
        ],
        dtype=np.float64,
    )
    return inv


def apply_affine(m, points):
    """Apply a 2x3 affine to an (..., 2) array of (x, y) points."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]


def warp_affine(image, m, out_size):
    """Resample `image` under the forward map `m` into an out_size square.

    `m` maps source coordinates to destination coordinates; each
    destination pixel center is pulled from the source via the inverse
    map with bilinear interpolation, zero outside the source bounds.
    Accepts (H, W) or (H, W, C) arrays; returns float32.
    """
    src = np.asarray(image, dtype=np.float32)
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    h, w, ch = src.shape
    inv = invert_affine(m)
    xs = np.arange(out_size, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, xs)
    sx = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    sy = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    # continuous point -> surrounding pixel centers
    fx = sx - 0.5
    fy = sy - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = (fx - x0).astype(np.float32)
    wy = (fy - y0).astype(np.float32)

    def sample(yy, xx):
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(inside[:, :, None], vals, 0.0).astype(np.float32)

    top = sample(y0, x0) * (1 - wx)[:, :, None] + sample(y0, x0 + 1) * wx[:, :, None]
    bot = sample(y0 + 1, x0) * (1 - wx)[:, :, None] + sample(y0 + 1, x0 + 1) * wx[:, :, None]
    out = top * (1 - wy)[:, :, None] + bot * wy[:, :, None]
    return out[:, :, 0] if squeeze else out


def crop_and_resize(image, center, scale, out_res):
    """Square crop around `center` resampled to out_res, plus its affine.

    Returns (crop, transform) where `transform` is the 2x3 map from
    original-image coordinates to crop coordinates, recorded so
    predictions can be mapped back through `invert_affine`.
    """
    img = np.asarray(image)
    if img.size == 0:
        raise ValueError("cannot crop an empty image")
    m = build_transform(center, scale, 0.0, out_res)
    return warp_affine(img, m, out_res), m


@dataclass
class AugmentConfig:
    """Draw ranges for training-time augmentation."""

    rotation_max_deg: float = 30.0
    scale_jitter: tuple = (0.75, 1.25)
    flip_prob: float = 0.5

    def validate(self):
        lo, hi = self.scale_jitter
        if not (0 < lo <= 1.0 <= hi):
            raise ValueError("scale_jitter interval must contain 1.0 and be positive")
        if self.rotation_max_deg < 0:
            raise ValueError("rotation_max_deg must be nonnegative")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be a probability")


@dataclass
class AugmentedSample:
    """A cropped training example with joints in crop coordinates."""

    image: np.ndarray  # (resolution, resolution, 3) float32
    joints: np.ndarray  # (K, 2) float64, crop coordinates
    present: np.ndarray  # (K,) bool, false when outside the crop
    visible: np.ndarray  # (K,) bool
    transform: np.ndarray  # 2x3, original -> crop
    flipped: bool


def augment(image, annotation, rng, config, resolution, flip_pairs=()):
    """Random rotation, scale jitter, and optional horizontal flip.

    Rotation is uniform in [-max, +max] degrees about the crop center
    and the scale multiplier uniform over the jitter interval; there is
    no translation jitter, so the crop center is a fixed point of every
    draw. Joints landing outside the crop are marked absent.
    """
    config.validate()
    rot = float(rng.uniform(-config.rotation_max_deg, config.rotation_max_deg))
    jitter = float(rng.uniform(config.scale_jitter[0], config.scale_jitter[1]))
    do_flip = bool(flip_pairs) and rng.random() < config.flip_prob
    m = build_transform(annotation.center, annotation.scale * jitter, rot, resolution)
    crop = warp_affine(image, m, resolution)
    joints = apply_affine(m, annotation.joints)
    present = annotation.present.copy()
    visible = annotation.visible.copy()
    if do_flip:
        crop = crop[:, ::-1].copy()
        joints = joints.copy()
        joints[:, 0] = resolution - joints[:, 0]
        perm = flip_permutation(flip_pairs, joints.shape[0])
        joints = joints[perm]
        present = present[perm]
        visible = visible[perm]
    inside = (
        (joints[:, 0] >= 0)
        & (joints[:, 0] < resolution)
        & (joints[:, 1] >= 0)
        & (joints[:, 1] < resolution)
    )
    present = present & inside
    visible = visible & present
    return AugmentedSample(
        image=crop,
        joints=joints,
        present=present,
        visible=visible,
        transform=m,
        flipped=do_flip,
    )


def flip_permutation(flip_pairs, num_joints):
    """Joint index permutation for a horizontal mirror; must be involutive."""
    perm = np.arange(num_joints)
    for a, b in flip_pairs:
        if not (0 <= a < num_joints and 0 <= b < num_joints):
            raise ValueError(f"flip pair ({a}, {b}) out of range for {num_joints} joints")
        perm[a], perm[b] = b, a
    if not np.array_equal(perm[perm], np.arange(num_joints)):
        raise ValueError("flip pairs do not form an involutive permutation")
    return perm
