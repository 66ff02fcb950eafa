"""Dense tensors, the primitive differentiable operations, and the
reverse-mode gradient tape.

Everything the network needs is built from eight primitives: conv2d,
maxpool2x2, upsample_nearest2x, batchnorm, relu, add, mse_loss and
sum_all. Each primitive computes its forward value eagerly and, when a
Graph is active, records a node holding a closure that maps the output
gradient to input gradients. ``backward`` replays the recorded nodes in
reverse execution order, which is already a topological order.

Conventions:
  * 4-D tensors are N,C,H,W (batch, channel, height, width), row-major.
  * Convolution is cross-correlation: no kernel flip. Checkpoints store
    weights under that convention.
  * dtype is float32 for training; float64 is supported everywhere so
    the finite-difference checker can run in double precision.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels

_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense n-dimensional array with an optional gradient buffer.

    Values are immutable by convention once produced by an op; only the
    optimizer mutates parameter data in place.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr
        self.data = self.data if self.data.flags.writeable else self.data.copy()
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def numel(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


class OpNode:
    """One recorded primitive: inputs, output, and the adjoint closure."""

    __slots__ = ("name", "inputs", "output", "backward_fn")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Graph:
    """Ordered record of executed primitives, replayable in reverse.

    Use as a context manager around a forward pass; ops executed while
    the graph is active append nodes in execution order. Distinct graphs
    may live on distinct threads; one graph must stay on one thread.
    """

    def __init__(self):
        self.nodes = []
        self._produced = set()

    def __enter__(self):
        _local.stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _local.stack.pop()
        assert popped is self, "Graph contexts must nest properly"
        return False

    def record(self, name, inputs, output, backward_fn):
        self.nodes.append(OpNode(name, inputs, output, backward_fn))
        self._produced.add(id(output))

    def produced(self, tensor):
        return id(tensor) in self._produced

    def backward(self, loss):
        backward(loss, self)


class _Local(threading.local):
    def __init__(self):
        self.stack = []


_local = _Local()


def _active_graph():
    return _local.stack[-1] if _local.stack else None


def _record(name, inputs, output, backward_fn):
    g = _active_graph()
    if g is not None:
        g.record(name, inputs, output, backward_fn)


def backward(loss, graph):
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    Repeated calls on the same graph accumulate gradients; clear them
    between calls (optimizer.zero_grad) when accumulation is not wanted.
    """
    if loss.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not graph.produced(loss):
        raise ValueError("loss was not produced by an op recorded on this graph")
    grads = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(graph.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        for inp, g_in in zip(node.inputs, node.backward_fn(g_out)):
            if g_in is None:
                continue
            if inp.requires_grad:
                inp.accumulate_grad(g_in)
            if graph.produced(inp):
                prev = grads.get(id(inp))
                grads[id(inp)] = g_in if prev is None else prev + g_in


def _needs_grad(graph_inputs):
    """An op must compute an input's gradient if the input is a
    requires_grad leaf or was itself produced on the active graph."""
    g = _active_graph()
    if g is None:
        return [False] * len(graph_inputs)
    return [t.requires_grad or g.produced(t) for t in graph_inputs]


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def conv2d(x, weight, bias, stride=1, padding=0):
    """2-D cross-correlation plus per-channel bias.

    x: (N,Cin,H,W), weight: (Cout,Cin,kh,kw), bias: (Cout,).
    Output spatial size: floor((H + 2*padding - kh)/stride) + 1.
    """
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(
            f"conv2d channel mismatch: input has {cin} channels, weight expects {cin_w}"
        )
    if bias.shape != (cout,):
        raise ValueError(f"conv2d bias must have shape ({cout},), got {bias.shape}")
    if stride < 1:
        raise ValueError("conv2d stride must be >= 1")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError(
            f"conv2d kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}"
        )
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1

    cols = kernels.im2col(x.data, kh, kw, stride, padding)  # (N, Cin*kh*kw, Ho*Wo)
    w_mat = weight.data.reshape(cout, cin * kh * kw)
    out_mat = np.matmul(w_mat, cols)  # (N, Cout, Ho*Wo)
    out_mat += bias.data[None, :, None]
    out = Tensor(out_mat.reshape(n, cout, ho, wo))

    need_x, need_w, need_b = _needs_grad((x, weight, bias))
    if need_x or need_w or need_b:
        def backward_fn(g):
            g_mat = g.reshape(n, cout, ho * wo)
            gx = gw = gb = None
            if need_b:
                gb = g_mat.sum(axis=(0, 2))
            if need_w:
                gw = np.matmul(g_mat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
            if need_x:
                gcols = np.matmul(w_mat.T, g_mat)
                gx = kernels.col2im(np.ascontiguousarray(gcols), h, w, kh, kw, stride, padding)
            return gx, gw, gb

        _record("conv2d", (x, weight, bias), out, backward_fn)
    return out


def maxpool2x2(x):
    """2x2 stride-2 max pooling. Gradient flows to the argmax cell only,
    first cell in row-major window order on ties."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 requires even spatial dims, got {h}x{w}")
    out_data, idx = kernels.maxpool2x2_forward(x.data)
    out = Tensor(out_data)

    if _needs_grad((x,))[0]:
        def backward_fn(g):
            return (kernels.maxpool2x2_backward(np.ascontiguousarray(g), idx),)

        _record("maxpool2x2", (x,), out, backward_fn)
    return out


def upsample_nearest2x(x):
    """Nearest-neighbor 2x upsampling; backward sums each 2x2 block."""
    out = Tensor(kernels.upsample2x_forward(x.data))

    if _needs_grad((x,))[0]:
        def backward_fn(g):
            return (kernels.upsample2x_backward(np.ascontiguousarray(g)),)

        _record("upsample_nearest2x", (x,), out, backward_fn)
    return out


class BatchNormState:
    """Running statistics for one batchnorm layer.

    ``mean``/``var`` hold exponential moving averages of the biased batch
    statistics; ``batches`` counts training batches seen. Eval mode before
    the first training batch is rejected.
    """

    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.batches = 0


def batchnorm(x, gamma, beta, state, mode):
    """Per-channel batch normalization over the N,H,W axes.

    Train mode normalizes by batch statistics and updates ``state``; eval
    mode normalizes by the running statistics.
    """
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batchnorm gamma/beta must have shape ({c},)")
    if mode == "train":
        if n * h * w < 2:
            raise ValueError("batchnorm train mode needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        m = np.asarray(state.momentum, dtype=x.dtype)
        state.mean = ((1 - m) * state.mean + m * mean).astype(x.dtype)
        state.var = ((1 - m) * state.var + m * var).astype(x.dtype)
        state.batches += 1
    elif mode == "eval":
        if state.batches == 0:
            raise ValueError("batchnorm eval mode before any running stats were recorded")
        mean = state.mean.astype(x.dtype)
        var = state.var.astype(x.dtype)
    else:
        raise ValueError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")

    inv_std = 1.0 / np.sqrt(var + np.asarray(state.eps, dtype=x.dtype))
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None])

    need_x, need_g, need_b = _needs_grad((x, gamma, beta))
    if need_x or need_g or need_b:
        reduce_count = n * h * w

        def backward_fn(g):
            gx = gg = gb = None
            if need_b:
                gb = g.sum(axis=(0, 2, 3))
            if need_g:
                gg = (g * xhat).sum(axis=(0, 2, 3))
            if need_x:
                scale = (gamma.data * inv_std)[None, :, None, None]
                if mode == "train":
                    g_mean = g.mean(axis=(0, 2, 3))[None, :, None, None]
                    gx_hat_mean = (g * xhat).sum(axis=(0, 2, 3))[None, :, None, None] / reduce_count
                    gx = scale * (g - g_mean - xhat * gx_hat_mean)
                else:
                    gx = scale * g
            return gx, gg, gb

        _record("batchnorm", (x, gamma, beta), out, backward_fn)
    return out


def relu(x):
    """Elementwise max(0, x); gradient is masked where x <= 0."""
    out = Tensor(np.maximum(x.data, 0))

    if _needs_grad((x,))[0]:
        mask = x.data > 0

        def backward_fn(g):
            return (g * mask,)

        _record("relu", (x,), out, backward_fn)
    return out


def add(a, b):
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    need_a, need_b = _needs_grad((a, b))
    if need_a or need_b:
        def backward_fn(g):
            return (g if need_a else None, g if need_b else None)

        _record("add", (a, b), out, backward_fn)
    return out


def mse_loss(pred, target):
    """Mean over all elements of the squared difference."""
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor(np.asarray(np.mean(diff * diff), dtype=pred.dtype))

    need_p, need_t = _needs_grad((pred, target))
    if need_p or need_t:
        scale = 2.0 / diff.size

        def backward_fn(g):
            gp = g * scale * diff
            return (gp if need_p else None, -gp if need_t else None)

        _record("mse_loss", (pred, target), out, backward_fn)
    return out


def sum_all(x):
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))

    if _needs_grad((x,))[0]:
        def backward_fn(g):
            return (np.full(x.shape, g, dtype=x.dtype),)

        _record("sum_all", (x,), out, backward_fn)
    return out
