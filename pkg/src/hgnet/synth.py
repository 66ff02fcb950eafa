"""Deterministic synthetic articulated-figure dataset.

Each sample is a stick figure with exactly known joint coordinates on
a textured background: pose angles, placement, figure height, colors,
and texture all derive from a per-(seed, index) generator, so samples
are bit-reproducible individually and generation order is irrelevant.
Occlusion events hide a limb joint behind a rectangle (visible=false,
present=true); truncation events push extremities outside the canvas
(present=false).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import Annotation, AnnotationSet, save_annotations, write_image
from .transforms import warp_affine

JOINT_NAMES = (
    "head_top",
    "neck",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
)

FLIP_PAIRS = ((2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (12, 13))

# Joint hierarchy; -1 marks children of the virtual pelvis root.
PARENTS = (1, -1, 1, 1, 2, 3, 4, 5, -1, -1, 8, 9, 10, 11)

# Indices eligible for occlusion events (limb extremities).
_OCCLUDABLE = (4, 5, 6, 7, 10, 11, 12, 13)


@dataclass
class SkeletonSpec:
    """Figure proportions (fractions of height) and pose angle ranges."""

    joint_names: tuple = JOINT_NAMES
    flip_pairs: tuple = FLIP_PAIRS
    parents: tuple = PARENTS
    bone_fractions: dict = field(
        default_factory=lambda: {
            "head": 0.16,
            "torso": 0.34,
            "shoulder_w": 0.24,
            "hip_w": 0.15,
            "upper_arm": 0.16,
            "forearm": 0.15,
            "thigh": 0.24,
            "shin": 0.24,
        }
    )
    angle_ranges: dict = field(
        default_factory=lambda: {
            "torso_lean": 0.30,  # radians either side of vertical
            "head_jitter": 0.18,
            "arm_swing": 1.45,  # from hanging straight down
            "elbow_bend": 1.60,
            "leg_swing": 0.45,
            "knee_bend": 0.80,
        }
    )

    @property
    def num_joints(self):
        return len(self.joint_names)

    def validate(self):
        if len(self.parents) != self.num_joints:
            raise ValueError("parents length must equal the joint count")
        for j in range(self.num_joints):
            seen, cur = set(), j
            while cur != -1:
                if cur in seen:
                    raise ValueError("parent links contain a cycle")
                seen.add(cur)
                cur = self.parents[cur]
        if any(v <= 0 for v in self.bone_fractions.values()):
            raise ValueError("bone lengths must be positive")
        perm = np.arange(self.num_joints)
        for a, b in self.flip_pairs:
            perm[a], perm[b] = b, a
        if not np.array_equal(perm[perm], np.arange(self.num_joints)):
            raise ValueError("flip pairs must be involutive")


def default_skeleton():
    spec = SkeletonSpec()
    spec.validate()
    return spec


@dataclass
class SynthSample:
    image: np.ndarray  # (size, size, 3) uint8
    annotation: Annotation


@dataclass
class SynthDataset:
    spec: SkeletonSpec
    samples: list
    image_size: int
    seed: int

    def __len__(self):
        return len(self.samples)

    def annotation_set(self):
        return AnnotationSet(
            num_joints=self.spec.num_joints,
            joint_names=list(self.spec.joint_names),
            flip_pairs=[list(p) for p in self.spec.flip_pairs],
            samples=[s.annotation for s in self.samples],
        )


def _pose_joints(spec, rng, height, pelvis):
    """Sample one pose; returns (K, 2) float64 joint coordinates."""
    frac = spec.bone_fractions
    ang = spec.angle_ranges
    j = np.zeros((spec.num_joints, 2))
    lean = rng.uniform(-ang["torso_lean"], ang["torso_lean"])
    up = np.array([np.sin(lean), -np.cos(lean)])
    perp = np.array([np.cos(lean), np.sin(lean)])
    neck = pelvis + up * frac["torso"] * height
    head_a = lean + rng.uniform(-ang["head_jitter"], ang["head_jitter"])
    j[0] = neck + np.array([np.sin(head_a), -np.cos(head_a)]) * frac["head"] * height
    j[1] = neck
    j[2] = neck - perp * frac["shoulder_w"] * height / 2
    j[3] = neck + perp * frac["shoulder_w"] * height / 2
    j[8] = pelvis - perp * frac["hip_w"] * height / 2
    j[9] = pelvis + perp * frac["hip_w"] * height / 2

    def swing(start, length, phi):
        return start + np.array([np.sin(phi), np.cos(phi)]) * length

    for shoulder, elbow, wrist, side in ((2, 4, 6, -1.0), (3, 5, 7, 1.0)):
        phi = lean + side * rng.uniform(-0.25, ang["arm_swing"])
        j[elbow] = swing(j[shoulder], frac["upper_arm"] * height, phi)
        phi2 = phi + side * rng.uniform(-0.2, ang["elbow_bend"])
        j[wrist] = swing(j[elbow], frac["forearm"] * height, phi2)
    for hip, knee, ankle, side in ((8, 10, 12, -1.0), (9, 11, 13, 1.0)):
        phi = lean + side * rng.uniform(-0.15, ang["leg_swing"])
        j[knee] = swing(j[hip], frac["thigh"] * height, phi)
        phi2 = phi - side * rng.uniform(0.0, ang["knee_bend"])
        j[ankle] = swing(j[knee], frac["shin"] * height, phi2)
    return j


def _value_noise(rng, size, cells=8):
    """Smooth random texture in [0, 1] from a bilinear-upsampled grid."""
    coarse = rng.random((cells + 2, cells + 2))
    s = size / cells
    m = np.array([[s, 0.0, -s], [0.0, s, -s]])
    return warp_affine(coarse, m, size)


def _capsule(img, a, b, radius, color, alpha=1.0):
    """Composite an anti-aliased thick segment (disk when a == b)."""
    size = img.shape[0]
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lo = np.floor(np.minimum(a, b) - radius - 1.5).astype(int)
    hi = np.ceil(np.maximum(a, b) + radius + 1.5).astype(int)
    x0, y0 = np.clip(lo, 0, size)
    x1, y1 = np.clip(hi, 0, size)
    if x0 >= x1 or y0 >= y1:
        return
    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    px = np.broadcast_to(xs[None, :], (y1 - y0, x1 - x0))
    py = np.broadcast_to(ys[:, None], (y1 - y0, x1 - x0))
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        dx, dy = px - a[0], py - a[1]
    else:
        t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
        dx = px - (a[0] + t * ab[0])
        dy = py - (a[1] + t * ab[1])
    dist = np.sqrt(dx * dx + dy * dy)
    cov = np.clip(radius + 0.5 - dist, 0.0, 1.0) * alpha
    region = img[y0:y1, x0:x1]
    region += cov[:, :, None] * (np.asarray(color, dtype=np.float32) - region)


_BONES = (
    (1, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
    (5, 7),
    (8, 9),
    (1, 8),
    (1, 9),
    (8, 10),
    (9, 11),
    (10, 12),
    (11, 13),
)


def _draw_figure(img, joints, height, rng, alpha=1.0):
    hue = rng.uniform(0.35, 1.0, size=3)
    hue[int(rng.integers(3))] = rng.uniform(0.0, 0.25)
    limb_r = max(1.2, 0.030 * height)
    for a, b in _BONES:
        _capsule(img, joints[a], joints[b], limb_r, hue, alpha)
    head_mid = (joints[0] + joints[1]) / 2
    head_r = np.linalg.norm(joints[0] - joints[1]) * 0.45
    _capsule(img, head_mid, head_mid, max(head_r, 1.5), hue, alpha)


def generate_sample(spec, index, image_size, seed, occlusion_prob=0.0, truncation_prob=0.0, distractor_prob=0.0):
    """Render one fully annotated figure; deterministic in (seed, index)."""
    rng = np.random.default_rng([seed, index])
    size = image_size
    height = rng.uniform(0.45, 0.70) * size
    pelvis = np.array(
        [
            size / 2 + rng.uniform(-0.06, 0.06) * size,
            size / 2 + rng.uniform(0.05, 0.12) * size,
        ]
    )
    truncate = rng.random() < truncation_prob
    if truncate:
        axis = int(rng.integers(2))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        pelvis[axis] += sign * size * rng.uniform(0.42, 0.55)
    joints = _pose_joints(spec, rng, height, pelvis)

    # background: two-tone value noise plus distractor shapes
    c0 = rng.uniform(0.05, 0.45, size=3).astype(np.float32)
    c1 = rng.uniform(0.35, 0.85, size=3).astype(np.float32)
    noise = _value_noise(rng, size)[:, :, None]
    img = c0 + (c1 - c0) * noise
    for _ in range(int(rng.integers(2, 5))):
        p = rng.uniform(0, size, size=2)
        q = p + rng.uniform(-0.3, 0.3, size=2) * size
        _capsule(img, p, q, rng.uniform(2, 0.12 * size), rng.uniform(0, 1, size=3), rng.uniform(0.3, 0.8))

    if rng.random() < distractor_prob:
        d_height = height * rng.uniform(0.45, 0.7)
        d_pelvis = pelvis + np.array([rng.choice((-1.0, 1.0)) * size * 0.33, rng.uniform(-0.05, 0.1) * size])
        _draw_figure(img, _pose_joints(spec, rng, d_height, d_pelvis), d_height, rng, alpha=0.95)

    _draw_figure(img, joints, height, rng)

    present = (
        (joints[:, 0] >= 0)
        & (joints[:, 0] < size)
        & (joints[:, 1] >= 0)
        & (joints[:, 1] < size)
    )
    visible = present.copy()

    if rng.random() < occlusion_prob:
        candidates = [k for k in _OCCLUDABLE if present[k]]
        if candidates:
            target = candidates[int(rng.integers(len(candidates)))]
            half = rng.uniform(0.055, 0.095, size=2) * size
            centre = joints[target] + rng.uniform(-0.4, 0.4, size=2) * half
            rect_lo, rect_hi = centre - half, centre + half
            x0, y0 = np.clip(np.floor(rect_lo).astype(int), 0, size)
            x1, y1 = np.clip(np.ceil(rect_hi).astype(int), 0, size)
            img[y0:y1, x0:x1] = rng.uniform(0, 1, size=3).astype(np.float32)
            covered = (
                (joints[:, 0] >= rect_lo[0])
                & (joints[:, 0] <= rect_hi[0])
                & (joints[:, 1] >= rect_lo[1])
                & (joints[:, 1] <= rect_hi[1])
            )
            visible = visible & ~covered

    norm_length = float(np.linalg.norm(joints[0] - joints[1]))
    inside = joints[present]
    ref = inside if len(inside) else joints
    bbox_lo, bbox_hi = ref.min(axis=0), ref.max(axis=0)
    center = (bbox_lo + bbox_hi) / 2
    side = 1.30 * float(max(bbox_hi - bbox_lo))
    scale = max(side, 0.2 * size) / 200.0

    annotation = Annotation(
        image_id=f"img_{index:06d}.png",
        center=center,
        scale=scale,
        joints=joints,
        present=present,
        visible=visible,
        norm_length=norm_length,
    )
    return SynthSample(image=np.clip(img * 255.0, 0, 255).astype(np.uint8), annotation=annotation)


def generate(spec, count, image_size, seed, occlusion_prob=0.0, truncation_prob=0.0, distractor_prob=0.0):
    """Generate `count` samples; per-index seeding makes order irrelevant."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if image_size < 32:
        raise ValueError(f"image size {image_size} too small for the figure, need >= 32")
    spec.validate()
    samples = [
        generate_sample(spec, i, image_size, seed, occlusion_prob, truncation_prob, distractor_prob)
        for i in range(count)
    ]
    return SynthDataset(spec=spec, samples=samples, image_size=image_size, seed=seed)


def export(dataset, directory):
    """Write PNG images plus a JSON Lines annotation file.

    Image paths in the annotation file are relative to the file's own
    directory; loading the exported file reproduces every annotation
    exactly (coordinates at 6-decimal serialized precision).
    """
    directory = Path(directory)
    img_dir = directory / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    aset = dataset.annotation_set() if isinstance(dataset, SynthDataset) else dataset
    relocated = []
    for ann in aset.samples:
        name = Path(ann.image_id).name
        relocated.append(
            Annotation(
                image_id=str(Path("images") / name),
                center=ann.center,
                scale=ann.scale,
                joints=ann.joints,
                present=ann.present,
                visible=ann.visible,
                norm_length=ann.norm_length,
            )
        )
    if isinstance(dataset, SynthDataset):
        for sample in dataset.samples:
            write_image(img_dir / Path(sample.annotation.image_id).name, sample.image)
    out = AnnotationSet(
        num_joints=aset.num_joints,
        joint_names=aset.joint_names,
        flip_pairs=aset.flip_pairs,
        samples=relocated,
        version=aset.version,
    )
    path = directory / "annotations.jsonl"
    save_annotations(path, out)
    return path


def load_dataset(annotation_path):
    """Load an exported dataset: (AnnotationSet, list of uint8 images).

    Image paths are resolved relative to the annotation file.
    """
    from .annotations import load_annotations, read_image

    annotation_path = Path(annotation_path)
    aset = load_annotations(annotation_path)
    images = [read_image(annotation_path.parent / ann.image_id) for ann in aset.samples]
    return aset, images
