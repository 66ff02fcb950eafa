"""Inference, PCK metrics, visibility splits, and presence PR curves.

Predicted positions live in original-image pixels: heatmap peaks are
decoded at output resolution, scaled by input/output ratio, and pushed
through the inverse crop affine. Accuracy counts only joints whose
ground truth exists (present), normalizing distances by each sample's
norm_length (the head-segment length).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .heatmaps import HeatmapSet, decode_set, to_continuous
from .model import stacked_forward
from .tensor import Tensor
from .transforms import apply_affine, build_transform, flip_permutation, invert_affine, warp_affine

TABLE_GROUPS = (
    ("Head", ("head_top", "neck")),
    ("Shoulder", ("l_shoulder", "r_shoulder")),
    ("Elbow", ("l_elbow", "r_elbow")),
    ("Wrist", ("l_wrist", "r_wrist")),
    ("Hip", ("l_hip", "r_hip")),
    ("Knee", ("l_knee", "r_knee")),
    ("Ankle", ("l_ankle", "r_ankle")),
)


def _forward(model, image_tensor):
    """Final-stack heatmaps for a model given as params or a callable."""
    if callable(model):
        outs = model(image_tensor)
    else:
        outs = stacked_forward(image_tensor, model, "eval")
    return outs[-1] if isinstance(outs, (list, tuple)) else outs


def predict_with_flip(model, image, flip_pairs):
    """Average heatmaps of the image and its mirror (channels permuted).

    output = 0.5 * (hm(image) + unflip(permute(hm(mirror(image))))),
    where mirror/unflip reverse the width axis and permute swaps
    left/right joint channels. The construction is exactly symmetric:
    feeding the mirrored image yields the mirrored, permuted output
    bit-for-bit.
    """
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] != 1:
        raise ValueError(f"predict_with_flip expects one image, got shape {arr.shape}")
    hm = _forward(model, Tensor(arr)).data
    perm = flip_permutation(flip_pairs, hm.shape[1])
    mirrored = np.ascontiguousarray(arr[:, :, :, ::-1])
    hm_m = _forward(model, Tensor(mirrored)).data
    undone = hm_m[:, perm, :, ::-1]
    avg = 0.5 * (hm + undone)
    return HeatmapSet(values=avg[0], resolution=avg.shape[-1])


@dataclass
class PCKResult:
    """Correct-keypoint rates at one threshold; NaN where uncounted."""

    per_joint: np.ndarray  # (K,) float, NaN when no countable joints
    counts: np.ndarray  # (K,) int
    correct: np.ndarray  # (K,) int
    threshold: float

    @property
    def mean(self):
        """Pooled accuracy over every countable joint; NaN if none."""
        total = int(self.counts.sum())
        return float(self.correct.sum()) / total if total else float("nan")


def _normalized_distances(predictions, annotations):
    preds = np.asarray(predictions, dtype=np.float64)
    gts = np.stack([a.joints for a in annotations])
    norms = np.array([a.norm_length for a in annotations], dtype=np.float64)
    if preds.shape != gts.shape:
        raise ValueError(f"predictions shape {preds.shape} != ground truth {gts.shape}")
    return np.linalg.norm(preds - gts, axis=2) / norms[:, None]


def pck(predictions, annotations, threshold, mask=None):
    """Fraction of joints within threshold * norm_length of ground truth.

    `mask` restricts counting (defaults to each annotation's present
    flags); masked-out joints leave both numerator and denominator.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    dist = _normalized_distances(predictions, annotations)
    if mask is None:
        mask = np.stack([a.present for a in annotations])
    hits = (dist <= threshold) & mask
    counts = mask.sum(axis=0)
    correct = hits.sum(axis=0)
    with np.errstate(invalid="ignore"):
        per_joint = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    return PCKResult(per_joint=per_joint, counts=counts, correct=correct, threshold=threshold)


def pck_curve(predictions, annotations, thresholds, mask=None):
    """PCK swept over ascending thresholds; pooled curve is nondecreasing."""
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("thresholds must be non-empty")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    return [pck(predictions, annotations, t, mask=mask) for t in thresholds]


@dataclass
class VisibilitySplit:
    overall: PCKResult
    visible_only: PCKResult
    occluded_only: PCKResult


def visibility_split_eval(predictions, annotations, threshold):
    """PCK overall, on visible joints, and on present-but-occluded joints."""
    present = np.stack([a.present for a in annotations])
    visible = np.stack([a.visible for a in annotations])
    return VisibilitySplit(
        overall=pck(predictions, annotations, threshold, mask=present),
        visible_only=pck(predictions, annotations, threshold, mask=visible),
        occluded_only=pck(predictions, annotations, threshold, mask=present & ~visible),
    )


@dataclass
class PRCurve:
    """Precision/recall over all distinct score thresholds, descending."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float  # NaN when undefined (single-class input)


def _pr_single(stats, flags):
    stats = np.asarray(stats, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if stats.shape != flags.shape or stats.ndim != 1:
        raise ValueError(
            f"stats and flags must be aligned 1-d arrays, got {stats.shape} and {flags.shape}"
        )
    pos = int(flags.sum())
    if pos == 0 or pos == len(flags):
        return PRCurve(
            thresholds=np.array([]), precision=np.array([]), recall=np.array([]), auc=float("nan")
        )
    order = np.argsort(-stats, kind="stable")
    sorted_stats = stats[order]
    sorted_flags = flags[order]
    tp = np.cumsum(sorted_flags)
    predicted = np.arange(1, len(stats) + 1)
    # group ties: keep the last index of each run of equal statistics
    last_of_run = np.nonzero(np.diff(sorted_stats, append=-np.inf))[0]
    thresholds = sorted_stats[last_of_run]
    precision = tp[last_of_run] / predicted[last_of_run]
    recall = tp[last_of_run] / pos
    # trapezoid over recall, extending the first precision to recall 0
    r = np.concatenate(([0.0], recall))
    p = np.concatenate(([precision[0]], precision))
    auc = float(np.trapezoid(p, r))
    return PRCurve(thresholds=thresholds, precision=precision, recall=recall, auc=auc)


def presence_pr(heatmap_stats, present_flags):
    """PR curve and trapezoidal AUC for annotation-presence prediction.

    1-d input treats the data as one joint and returns a single PRCurve;
    (N, K) input returns one PRCurve per joint column.
    """
    stats = np.asarray(heatmap_stats, dtype=np.float64)
    flags = np.asarray(present_flags, dtype=bool)
    if stats.ndim == 1:
        return _pr_single(stats, flags)
    if stats.ndim != 2 or stats.shape != flags.shape:
        raise ValueError(f"expected aligned (N, K) arrays, got {stats.shape} and {flags.shape}")
    return [_pr_single(stats[:, k], flags[:, k]) for k in range(stats.shape[1])]


# ---------------------------------------------------------------------------
# Dataset-level inference
# ---------------------------------------------------------------------------

@dataclass
class DatasetPredictions:
    """Decoded positions and activation statistics for a whole dataset."""

    positions: np.ndarray  # (stacks, N, K, 2) original-image coordinates
    max_activation: np.ndarray  # (N, K), final stack
    mean_activation: np.ndarray  # (N, K), final stack
    degenerate: np.ndarray  # (N, K) bool, final stack

    @property
    def final(self):
        return self.positions[-1]


def _eval_crop(image, annotation, input_res):
    m = build_transform(annotation.center, annotation.scale, 0.0, input_res)
    crop = warp_affine(np.asarray(image, dtype=np.float32) / 255.0, m, input_res)
    return crop.transpose(2, 0, 1), m


def predict_dataset(params, annotations, images, flip=False, flip_pairs=(), batch_size=8, quarter_offset=True):
    """Run eval-mode inference over a dataset and decode every stack.

    Returns a DatasetPredictions with positions mapped back to
    original-image coordinates through each sample's crop affine. With
    `flip`, the final stack uses flip-averaged heatmaps (intermediate
    stacks keep the plain forward pass).
    """
    cfg = params.config
    input_res, out_res = cfg.input_resolution, cfg.output_resolution
    ratio = input_res / out_res
    n, k, s = len(annotations), cfg.num_joints, cfg.num_stacks
    positions = np.zeros((s, n, k, 2))
    max_act = np.zeros((n, k))
    mean_act = np.zeros((n, k))
    degenerate = np.zeros((n, k), dtype=bool)
    for start in range(0, n, batch_size):
        idx = range(start, min(start + batch_size, n))
        crops, maps = zip(*(_eval_crop(images[i], annotations[i], input_res) for i in idx))
        batch = Tensor(np.stack(crops))
        outs = stacked_forward(batch, params, "eval")
        values = [o.data for o in outs]
        if flip:
            flipped = [
                predict_with_flip(params, crops[j], flip_pairs).values for j in range(len(idx))
            ]
            values = values[:-1] + [np.stack(flipped)]
        for stack_i, stack_values in enumerate(values):
            for j, i in enumerate(idx):
                pos, degen, mx, mn = decode_set(stack_values[j], quarter_offset=quarter_offset)
                original = apply_affine(invert_affine(maps[j]), to_continuous(pos) * ratio)
                positions[stack_i, i] = original
                if stack_i == s - 1:
                    max_act[i], mean_act[i], degenerate[i] = mx, mn, degen
    return DatasetPredictions(
        positions=positions, max_activation=max_act, mean_activation=mean_act, degenerate=degenerate
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    joint_names: list
    reference: PCKResult
    curve_thresholds: list
    curve: list  # list[PCKResult] aligned with curve_thresholds
    split: VisibilitySplit
    presence: list = field(default_factory=list)  # list[PRCurve] per joint

    def to_csv(self):
        """One row per joint per threshold, 6 significant digits."""
        lines = ["joint,threshold,pck,count"]
        for result in self.curve:
            for k, name in enumerate(self.joint_names):
                lines.append(
                    f"{name},{result.threshold:.6g},{result.per_joint[k]:.6g},{int(result.counts[k])}"
                )
        return "\n".join(lines) + "\n"

    def summary_table(self):
        """Grouped accuracy table in the conventional column order."""
        names = list(self.joint_names)
        groups = []
        for label, members in TABLE_GROUPS:
            idx = [names.index(m) for m in members if m in names]
            if idx:
                groups.append((label, idx))
        if not groups:
            groups = [(name, [k]) for k, name in enumerate(names)]
        res = self.reference
        cols, vals = [], []
        for label, idx in groups:
            cnt = res.counts[idx].sum()
            val = res.correct[idx].sum() / cnt if cnt else float("nan")
            cols.append(label)
            vals.append(val)
        cols.append("Total")
        vals.append(res.mean)
        head = "  ".join(f"{c:>8}" for c in cols)
        row = "  ".join(f"{100 * v:8.1f}" for v in vals)
        title = f"PCK@{res.threshold:g} (norm: head segment)"
        return f"{title}\n{head}\n{row}\n"


def evaluate_predictions(predictions, annotations, joint_names, threshold=0.5, curve_thresholds=None, presence_stats=None):
    """Assemble the full report from final-stack predictions."""
    if curve_thresholds is None:
        curve_thresholds = [round(0.05 * i, 2) for i in range(11)]
    curve = pck_curve(predictions, annotations, curve_thresholds)
    report = EvalReport(
        joint_names=list(joint_names),
        reference=pck(predictions, annotations, threshold),
        curve_thresholds=list(curve_thresholds),
        curve=curve,
        split=visibility_split_eval(predictions, annotations, threshold),
    )
    if presence_stats is not None:
        flags = np.stack([a.present for a in annotations])
        report.presence = presence_pr(presence_stats, flags)
    return report
