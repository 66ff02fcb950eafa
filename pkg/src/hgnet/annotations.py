"""Keypoint annotation records and their JSON Lines serialization.

A dataset file starts with one header line naming the joint set:

    {"version": 1, "num_joints": K, "joint_names": [...], "flip_pairs": [[a, b], ...]}

followed by one line per sample:

    {"image": "relative/path.png", "center": [x, y], "scale": s,
     "joints": [[x, y], ...], "present": [...], "visible": [...],
     "norm_length": r}

Coordinates serialize rounded to 6 decimal places, so serializing a
parsed canonical file reproduces it modulo whitespace. Violations are
reported with the offending line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

FORMAT_VERSION = 1


class AnnotationError(ValueError):
    """A schema violation, tagged with file and line context."""


@dataclass
class Annotation:
    """Ground truth for one person instance, in original-image pixels."""

    image_id: str
    center: np.ndarray  # (2,) float64
    scale: float  # crop window side = scale * 200 px
    joints: np.ndarray  # (K, 2) float64
    present: np.ndarray  # (K,) bool: ground truth exists
    visible: np.ndarray  # (K,) bool: present and not occluded
    norm_length: float  # head-segment length, the PCK normalizer

    def validate(self):
        if self.scale <= 0:
            raise AnnotationError(f"scale must be positive, got {self.scale}")
        if self.norm_length <= 0:
            raise AnnotationError(f"norm_length must be positive, got {self.norm_length}")
        if np.any(self.visible & ~self.present):
            raise AnnotationError("visible joints must also be present")


@dataclass
class AnnotationSet:
    """A parsed dataset: the joint vocabulary plus all samples."""

    num_joints: int
    joint_names: list
    flip_pairs: list
    samples: list = field(default_factory=list)
    version: int = FORMAT_VERSION

    def __len__(self):
        return len(self.samples)


def _require(obj, key, lineno, path):
    if key not in obj:
        raise AnnotationError(f"{path}:{lineno}: missing key '{key}'")
    return obj[key]


def _parse_sample(obj, num_joints, lineno, path):
    joints = np.asarray(_require(obj, "joints", lineno, path), dtype=np.float64)
    if joints.shape != (num_joints, 2):
        raise AnnotationError(
            f"{path}:{lineno}: joints shape {joints.shape} != ({num_joints}, 2)"
        )
    present = np.asarray(_require(obj, "present", lineno, path), dtype=bool)
    visible = np.asarray(_require(obj, "visible", lineno, path), dtype=bool)
    for name, arr in (("present", present), ("visible", visible)):
        if arr.shape != (num_joints,):
            raise AnnotationError(f"{path}:{lineno}: {name} length != num_joints")
    center = np.asarray(_require(obj, "center", lineno, path), dtype=np.float64)
    if center.shape != (2,):
        raise AnnotationError(f"{path}:{lineno}: center must be [x, y]")
    ann = Annotation(
        image_id=str(_require(obj, "image", lineno, path)),
        center=center,
        scale=float(_require(obj, "scale", lineno, path)),
        joints=joints,
        present=present,
        visible=visible,
        norm_length=float(_require(obj, "norm_length", lineno, path)),
    )
    try:
        ann.validate()
    except AnnotationError as exc:
        raise AnnotationError(f"{path}:{lineno}: {exc}") from None
    return ann


def load_annotations(path):
    """Parse a JSON Lines annotation file into an AnnotationSet."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise AnnotationError(f"{path}:1: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}:1: invalid JSON in header: {exc}") from None
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise AnnotationError(f"{path}:1: unrecognized version {version!r}")
    num_joints = int(_require(header, "num_joints", 1, path))
    names = list(_require(header, "joint_names", 1, path))
    if len(names) != num_joints:
        raise AnnotationError(f"{path}:1: joint_names length != num_joints")
    pairs = [tuple(int(v) for v in p) for p in _require(header, "flip_pairs", 1, path)]
    result = AnnotationSet(num_joints=num_joints, joint_names=names, flip_pairs=pairs)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        result.samples.append(_parse_sample(obj, num_joints, lineno, path))
    return result


def _round6(values):
    rounded = np.round(np.asarray(values, dtype=np.float64), 6)
    return rounded.tolist()


def serialize_annotations(aset):
    """Render an AnnotationSet back to canonical JSON Lines text."""
    out = [
        json.dumps(
            {
                "version": aset.version,
                "num_joints": aset.num_joints,
                "joint_names": list(aset.joint_names),
                "flip_pairs": [list(p) for p in aset.flip_pairs],
            }
        )
    ]
    for ann in aset.samples:
        out.append(
            json.dumps(
                {
                    "image": ann.image_id,
                    "center": _round6(ann.center),
                    "scale": round(float(ann.scale), 6),
                    "joints": _round6(ann.joints),
                    "present": [bool(v) for v in ann.present],
                    "visible": [bool(v) for v in ann.visible],
                    "norm_length": round(float(ann.norm_length), 6),
                }
            )
        )
    return "\n".join(out) + "\n"


def save_annotations(path, aset):
    Path(path).write_text(serialize_annotations(aset), encoding="utf-8")


def read_image(path):
    """Load an image file as (H, W, 3) uint8 RGB."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_image(path, array):
    """Write (H, W, 3) uint8 RGB to disk; format from the extension."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {arr.dtype}")
    Image.fromarray(arr, mode="RGB").save(path)
