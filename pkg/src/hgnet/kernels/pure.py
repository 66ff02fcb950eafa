"""Pure numpy implementations of the hot spatial kernels.

Semantically identical to the compiled versions in ``_native.pyx``; this
module is the fallback selected at import when the extension is missing
(or when ``HGNET_KERNELS=pure`` is set). All functions accept float32 or
float64 arrays in N,C,H,W layout and are deterministic.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x, kh, kw, stride, padding):
    """Lower convolution patches into a (N, C*kh*kw, Ho*Wo) matrix."""
    n, c, h, w = x.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    sn, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
    )
    return np.ascontiguousarray(windows).reshape(n, c * kh * kw, ho * wo)


def col2im(cols, h, w, kh, kw, stride, padding):
    """Adjoint of im2col: scatter-add patch columns back onto the image."""
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if padding > 0:
        out = out[:, :, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(out)


def maxpool2x2_forward(x):
    """2x2/stride-2 max pool. Returns (output, argmax) where argmax holds the
    row-major index (0..3) of the first maximal cell in each window."""
    n, c, h, w = x.shape
    windows = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = np.argmax(windows, axis=-1).astype(np.uint8)
    out = np.take_along_axis(windows, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(grad_out, idx):
    """Route each pooled gradient to the argmax cell of its window."""
    n, c, ho, wo = grad_out.shape
    windows = np.zeros((n, c, ho, wo, 4), dtype=grad_out.dtype)
    np.put_along_axis(windows, idx[..., None].astype(np.intp), grad_out[..., None], axis=-1)
    out = windows.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(out.reshape(n, c, ho * 2, wo * 2))


def upsample2x_forward(x):
    """Nearest-neighbor 2x upsampling: each cell becomes a 2x2 block."""
    n, c, h, w = x.shape
    out = np.broadcast_to(x[:, :, :, None, :, None], (n, c, h, 2, w, 2))
    return np.ascontiguousarray(out.reshape(n, c, h * 2, w * 2))


def upsample2x_backward(grad_out):
    """Sum each 2x2 block of gradient into its source cell."""
    n, c, h2, w2 = grad_out.shape
    g = grad_out.reshape(n, c, h2 // 2, 2, w2 // 2, 2)
    return np.ascontiguousarray(g.sum(axis=(3, 5)))
