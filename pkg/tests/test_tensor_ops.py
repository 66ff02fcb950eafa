"""Forward semantics of each primitive against independent oracles."""

import numpy as np
import pytest

from hgnet.tensor import (
    BatchNormState,
    Graph,
    Tensor,
    add,
    backward,
    batchnorm,
    conv2d,
    maxpool2x2,
    mse_loss,
    relu,
    sum_all,
    upsample_nearest2x,
)


def conv2d_oracle(x, w, b, stride, padding):
    """Plain quadruple-loop cross-correlation."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
            out[:, :, i, j] = np.einsum("ncij,ocij->no", patch, w)
    return out + b[None, :, None, None]


@pytest.mark.parametrize(
    "shape,kshape,stride,padding",
    [
        ((2, 3, 8, 8), (5, 3, 3, 3), 1, 1),
        ((1, 2, 9, 7), (4, 2, 3, 3), 2, 0),
        ((2, 4, 6, 6), (3, 4, 1, 1), 1, 0),
        ((1, 3, 16, 16), (6, 3, 7, 7), 2, 3),
    ],
)
def test_conv2d_matches_loop_oracle(shape, kshape, stride, padding):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape)
    w = rng.standard_normal(kshape)
    b = rng.standard_normal(kshape[0])
    got = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64), stride, padding)
    want = conv2d_oracle(x, w, b, stride, padding)
    assert got.shape == want.shape
    np.testing.assert_allclose(got.data, want, rtol=1e-12, atol=1e-12)


def test_conv2d_rejects_mismatched_channels():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    w = Tensor(np.zeros((2, 4, 3, 3)))
    b = Tensor(np.zeros(2))
    with pytest.raises(ValueError, match="channel mismatch"):
        conv2d(x, w, b)


def test_maxpool_matches_block_oracle():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 8, 6))
    got = maxpool2x2(Tensor(x))
    want = x.reshape(2, 3, 4, 2, 3, 2).max(axis=(3, 5))
    np.testing.assert_array_equal(got.data, want)


def test_maxpool_tie_routes_gradient_to_first_element():
    # All four values equal: only the row-major first position gets gradient.
    x = Tensor(np.full((1, 1, 2, 2), 3.0), requires_grad=True)
    with Graph() as g:
        loss = sum_all(maxpool2x2(x))
        backward(loss, g)
    np.testing.assert_array_equal(
        x.grad[0, 0], np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.float32)
    )


def test_maxpool_rejects_odd_sizes():
    with pytest.raises(ValueError):
        maxpool2x2(Tensor(np.zeros((1, 1, 3, 4))))


def test_upsample_matches_repeat():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    got = upsample_nearest2x(Tensor(x))
    want = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    np.testing.assert_array_equal(got.data, want)


def test_upsample_backward_sums_each_block():
    x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2), requires_grad=True)
    with Graph() as g:
        loss = sum_all(upsample_nearest2x(x))
        backward(loss, g)
    np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 4.0, dtype=np.float32))


def test_batchnorm_train_normalizes_with_biased_variance():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 3, 5, 5)) * 2.0 + 1.0
    gamma = rng.standard_normal(3)
    beta = rng.standard_normal(3)
    state = BatchNormState(3, dtype=np.float64)
    got = batchnorm(
        Tensor(x, dtype=np.float64),
        Tensor(gamma, dtype=np.float64),
        Tensor(beta, dtype=np.float64),
        state,
        "train",
    )
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))  # biased, ddof=0
    want = (x - mean[None, :, None, None]) / np.sqrt(var[None, :, None, None] + 1e-5)
    want = want * gamma[None, :, None, None] + beta[None, :, None, None]
    np.testing.assert_allclose(got.data, want, rtol=1e-10)
    # Running stats move toward the batch statistics with momentum 0.1.
    np.testing.assert_allclose(state.mean, 0.1 * mean, rtol=1e-10)
    np.testing.assert_allclose(state.var, 0.9 * 1.0 + 0.1 * var, rtol=1e-10)
    assert state.batches == 1


def test_batchnorm_eval_uses_running_statistics():
    rng = np.random.default_rng(4)
    gamma = Tensor(np.ones(2, dtype=np.float64))
    beta = Tensor(np.zeros(2, dtype=np.float64))
    state = BatchNormState(2, dtype=np.float64)
    x_train = Tensor(rng.standard_normal((8, 2, 4, 4)), dtype=np.float64)
    batchnorm(x_train, gamma, beta, state, "train")
    x = rng.standard_normal((1, 2, 4, 4))
    got = batchnorm(Tensor(x, dtype=np.float64), gamma, beta, state, "eval")
    want = (x - state.mean[None, :, None, None]) / np.sqrt(state.var[None, :, None, None] + 1e-5)
    np.testing.assert_allclose(got.data, want, rtol=1e-10)


def test_batchnorm_eval_before_any_training_batch_raises():
    state = BatchNormState(2)
    with pytest.raises(ValueError):
        batchnorm(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, "eval")


def test_batchnorm_train_needs_two_values_per_channel():
    state = BatchNormState(2)
    with pytest.raises(ValueError, match="at least 2 values"):
        batchnorm(Tensor(np.zeros((1, 2, 1, 1))), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, "train")


def test_relu_zeroes_negatives_and_keeps_positives():
    x = np.array([[-1.5, 0.0, 2.5]], dtype=np.float32)
    got = relu(Tensor(x))
    np.testing.assert_array_equal(got.data, np.array([[0.0, 0.0, 2.5]], dtype=np.float32))


def test_add_requires_matching_shapes():
    with pytest.raises(ValueError, match="shape mismatch"):
        add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_mse_loss_hand_value():
    pred = Tensor(np.array([1.0, 2.0]))
    target = Tensor(np.array([0.0, 0.0]))
    assert mse_loss(pred, target).item() == pytest.approx(2.5)


def test_sum_all_is_scalar():
    out = sum_all(Tensor(np.arange(6.0).reshape(2, 3)))
    assert out.shape == ()
    assert out.item() == pytest.approx(15.0)


def test_backward_rejects_non_scalar_loss():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with Graph() as g:
        y = relu(x)
        with pytest.raises(ValueError, match="scalar"):
            backward(y, g)


def test_backward_accumulates_through_shared_input():
    # x feeds both branches of an add: gradient is the sum of both paths.
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    with Graph() as g:
        loss = sum_all(add(relu(x), relu(x)))
        backward(loss, g)
    np.testing.assert_array_equal(x.grad, np.array([2.0, 0.0], dtype=np.float32))


def test_ops_outside_graph_do_not_record():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = relu(x)  # no active graph: pure forward
    assert y.grad is None
    with Graph() as g:
        assert len(g.nodes) == 0


def test_tensor_keeps_zero_dim_scalars():
    t = Tensor(np.float32(3.0))
    assert t.shape == ()
    assert t.item() == 3.0
