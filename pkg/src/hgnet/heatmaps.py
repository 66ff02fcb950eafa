"""Gaussian target rendering and peak decoding.

Joint positions here are continuous (x, y) in heatmap coordinates,
pixel centers at half-integers. Decoded peaks are reported in pixel
index units (the peak of a target rendered exactly at pixel center
(j + 0.5, i + 0.5) decodes to (j, i)); `to_continuous` adds the half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class HeatmapSet:
    """Per-joint score maps plus the supervision mask for targets.

    For rendered targets, in_window[k] is false when the joint is
    absent or fell outside the window; such channels are all zeros and
    are excluded from accuracy counting but still supervised toward
    zero. For predictions the mask is meaningless and left empty.
    """

    values: np.ndarray  # (K, R, R) float32
    resolution: int
    in_window: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def render_targets(joints, present, out_res, sigma_px=1.0):
    """Unit-peak Gaussian per present joint, zeros for absent ones.

    Channel k holds exp(-((cx - xk)^2 + (cy - yk)^2) / (2 sigma^2))
    evaluated at every pixel center (cx, cy), with the joint at its
    true sub-pixel location; the peak value is exactly 1 only when the
    joint sits on a pixel center. No truncation window and no
    renormalization, so closed-form values hold everywhere.
    """
    if out_res <= 0:
        raise ValueError(f"out_res must be positive, got {out_res}")
    if sigma_px <= 0:
        raise ValueError(f"sigma_px must be positive, got {sigma_px}")
    joints = np.asarray(joints, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    k = joints.shape[0]
    centers = np.arange(out_res, dtype=np.float64) + 0.5
    values = np.zeros((k, out_res, out_res), dtype=np.float32)
    in_window = np.zeros(k, dtype=bool)
    inv = 1.0 / (2.0 * sigma_px * sigma_px)
    for j in range(k):
        x, y = joints[j]
        if not present[j]:
            continue
        if not (0 <= x < out_res and 0 <= y < out_res):
            continue
        in_window[j] = True
        d2 = (centers[None, :] - x) ** 2 + (centers[:, None] - y) ** 2
        values[j] = np.exp(-d2 * inv).astype(np.float32)
    return HeatmapSet(values=values, resolution=out_res, in_window=in_window)


@dataclass
class DecodedPeak:
    x: float
    y: float
    degenerate: bool
    max_activation: float
    mean_activation: float


def decode(heatmap, quarter_offset=True):
    """Argmax peak with optional quarter-pixel refinement.

    The argmax takes the first maximum in row-major order. Each axis is
    then shifted by 0.25 px toward its strictly larger neighbor; no
    shift on a tie or at the window border. An all-equal heatmap has no
    peak and decodes to (0, 0) with the degenerate flag set.
    """
    hm = np.asarray(heatmap)
    if hm.ndim != 2 or hm.size == 0:
        raise ValueError(f"decode expects a non-empty 2-d heatmap, got shape {hm.shape}")
    h, w = hm.shape
    max_act = float(hm.max())
    mean_act = float(hm.mean())
    if max_act == hm.min():
        return DecodedPeak(0.0, 0.0, True, max_act, mean_act)
    flat = int(np.argmax(hm))
    iy, ix = divmod(flat, w)
    x, y = float(ix), float(iy)
    if quarter_offset:
        if 0 < ix < w - 1:
            right, left = hm[iy, ix + 1], hm[iy, ix - 1]
            if right > left:
                x += 0.25
            elif right < left:
                x -= 0.25
        if 0 < iy < h - 1:
            below, above = hm[iy + 1, ix], hm[iy - 1, ix]
            if below > above:
                y += 0.25
            elif below < above:
                y -= 0.25
    return DecodedPeak(x, y, False, max_act, mean_act)


def decode_set(heatmaps, quarter_offset=True):
    """Decode every channel; returns positions (K, 2) plus per-joint stats."""
    values = heatmaps.values if isinstance(heatmaps, HeatmapSet) else np.asarray(heatmaps)
    k = values.shape[0]
    positions = np.zeros((k, 2), dtype=np.float64)
    degenerate = np.zeros(k, dtype=bool)
    max_act = np.zeros(k, dtype=np.float64)
    mean_act = np.zeros(k, dtype=np.float64)
    for j in range(k):
        peak = decode(values[j], quarter_offset=quarter_offset)
        positions[j] = (peak.x, peak.y)
        degenerate[j] = peak.degenerate
        max_act[j] = peak.max_activation
        mean_act[j] = peak.mean_activation
    return positions, degenerate, max_act, mean_act


def to_continuous(positions):
    """Pixel-index decode output -> continuous pixel-center coordinates."""
    return np.asarray(positions, dtype=np.float64) + 0.5
