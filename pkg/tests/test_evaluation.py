"""Dataset inference, flip averaging, and report assembly."""

import numpy as np
import pytest

from hgnet.evaluation import (
    DatasetPredictions,
    evaluate_predictions,
    predict_dataset,
    predict_with_flip,
)
from hgnet.tensor import Tensor
from hgnet.transforms import flip_permutation


def _dataset(small_dataset):
    aset = small_dataset.annotation_set()
    return aset, [s.image for s in small_dataset.samples]


def test_flip_prediction_is_exactly_symmetric(tiny_trained, small_dataset):
    params = tiny_trained[0]
    pairs = small_dataset.annotation_set().flip_pairs
    perm = flip_permutation(pairs, 14)
    rng = np.random.default_rng(0)
    x = rng.random((3, 32, 32), dtype=np.float32)

    a = predict_with_flip(params, x, pairs).values
    b = predict_with_flip(params, x[:, :, ::-1], pairs).values
    # Mirroring the input mirrors and channel-permutes the output,
    # bit for bit: the average sees the same two summands either way.
    assert np.array_equal(b, a[perm, :, ::-1])


def test_flip_prediction_accepts_tensor_input(tiny_trained, small_dataset):
    params = tiny_trained[0]
    pairs = small_dataset.annotation_set().flip_pairs
    rng = np.random.default_rng(1)
    x = rng.random((3, 32, 32), dtype=np.float32)
    a = predict_with_flip(params, x, pairs).values
    b = predict_with_flip(params, Tensor(x.copy()), pairs).values
    assert np.array_equal(a, b)


def test_flip_prediction_rejects_batches(tiny_trained, small_dataset):
    params = tiny_trained[0]
    pairs = small_dataset.annotation_set().flip_pairs
    with pytest.raises(ValueError, match="one image"):
        predict_with_flip(params, np.zeros((2, 3, 32, 32), dtype=np.float32), pairs)


def test_symmetric_constant_model_is_flip_fixed_point():
    rng = np.random.default_rng(2)
    pairs = ((0, 1),)
    perm = flip_permutation(pairs, 2)
    raw = rng.random((1, 2, 8, 8)).astype(np.float32)
    sym = 0.5 * (raw + raw[:, perm, :, ::-1])

    def model(_):
        return Tensor(sym.copy())

    out = predict_with_flip(model, np.zeros((3, 8, 8), dtype=np.float32), pairs)
    assert np.array_equal(out.values, sym[0])


def test_predict_dataset_shapes(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    preds = predict_dataset(params, aset.samples, images)
    n = len(aset.samples)
    assert isinstance(preds, DatasetPredictions)
    assert preds.positions.shape == (2, n, 14, 2)
    assert preds.max_activation.shape == (n, 14)
    assert preds.mean_activation.shape == (n, 14)
    assert preds.degenerate.dtype == bool
    assert np.array_equal(preds.final, preds.positions[-1])


def test_predict_dataset_batch_size_invariance(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    a = predict_dataset(params, aset.samples, images, batch_size=3)
    b = predict_dataset(params, aset.samples, images, batch_size=8)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.max_activation, b.max_activation)


def test_quarter_offset_moves_predictions(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    on = predict_dataset(params, aset.samples, images, quarter_offset=True)
    off = predict_dataset(params, aset.samples, images, quarter_offset=False)
    assert not np.array_equal(on.positions, off.positions)


def test_flip_averaging_replaces_only_final_stack(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    plain = predict_dataset(params, aset.samples, images)
    flipped = predict_dataset(
        params, aset.samples, images, flip=True, flip_pairs=aset.flip_pairs
    )
    assert np.array_equal(plain.positions[:-1], flipped.positions[:-1])
    assert not np.array_equal(plain.positions[-1], flipped.positions[-1])
    assert not np.array_equal(plain.max_activation, flipped.max_activation)


def test_predictions_land_in_original_image_frame(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    preds = predict_dataset(params, aset.samples, images)
    # Crop windows sit inside the 96-px frames with margin; decoded
    # peaks must come back in original pixels, not heatmap cells.
    assert preds.final.max() > 8.0
    for i, ann in enumerate(aset.samples):
        half = ann.scale * 100.0
        lo = np.array(ann.center) - 1.5 * half
        hi = np.array(ann.center) + 1.5 * half
        assert (preds.final[i] >= lo - 1).all() and (preds.final[i] <= hi + 1).all()


def test_evaluate_predictions_report(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    preds = predict_dataset(params, aset.samples, images)
    report = evaluate_predictions(
        preds.final,
        aset.samples,
        aset.joint_names,
        threshold=0.5,
        presence_stats=preds.max_activation,
    )
    assert report.reference.threshold == 0.5
    assert report.curve_thresholds == [round(0.05 * i, 2) for i in range(11)]
    assert len(report.curve) == 11
    assert len(report.presence) == 14

    lines = report.to_csv().splitlines()
    assert lines[0] == "joint,threshold,pck,count"
    assert len(lines) == 1 + 14 * 11

    table = report.summary_table()
    for label in ("Head", "Shoulder", "Wrist", "Ankle", "Total"):
        assert label in table
    assert table.startswith("PCK@0.5")


def test_summary_table_falls_back_to_per_joint_columns(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    preds = predict_dataset(params, aset.samples, images)
    names = [f"j{i}" for i in range(14)]
    report = evaluate_predictions(preds.final, aset.samples, names)
    table = report.summary_table()
    assert "j0" in table and "j13" in table and "Total" in table


def test_split_counts_partition_presence(tiny_trained, small_dataset):
    params = tiny_trained[0]
    aset, images = _dataset(small_dataset)
    preds = predict_dataset(params, aset.samples, images)
    report = evaluate_predictions(preds.final, aset.samples, aset.joint_names)
    split = report.split
    assert np.array_equal(
        split.overall.counts, split.visible_only.counts + split.occluded_only.counts
    )
