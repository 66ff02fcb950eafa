# Compiled spatial kernels: im2col/col2im patch movement, 2x2 max pooling
# and nearest-neighbor 2x upsampling, forward and backward. Mirrors the
# numpy fallback in pure.py; both backends must stay interchangeable.

import numpy as np

cimport cython
from cython cimport floating


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int padding):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int ho = (h + 2 * padding - kh) // stride + 1
    cdef int wo = (w + 2 * padding - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c * kh * kw, ho * wo), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef int b, ci, ki, kj, oh, ow, ih, iw, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for ki in range(kh):
                    for kj in range(kw):
                        row = (ci * kh + ki) * kw + kj
                        for oh in range(ho):
                            ih = oh * stride + ki - padding
                            if ih < 0 or ih >= h:
                                continue
                            for ow in range(wo):
                                iw = ow * stride + kj - padding
                                if 0 <= iw < w:
                                    out[b, row, oh * wo + ow] = x[b, ci, ih, iw]
    return out_arr


def col2im(floating[:, :, ::1] cols, int h, int w, int kh, int kw, int stride, int padding):
    cdef int n = cols.shape[0]
    cdef int c = cols.shape[1] // (kh * kw)
    cdef int ho = (h + 2 * padding - kh) // stride + 1
    cdef int wo = (w + 2 * padding - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef int b, ci, ki, kj, oh, ow, ih, iw, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for ki in range(kh):
                    for kj in range(kw):
                        row = (ci * kh + ki) * kw + kj
                        for oh in range(ho):
                            ih = oh * stride + ki - padding
                            if ih < 0 or ih >= h:
                                continue
                            for ow in range(wo):
                                iw = ow * stride + kj - padding
                                if 0 <= iw < w:
                                    out[b, ci, ih, iw] += cols[b, row, oh * wo + ow]
    return out_arr


def maxpool2x2_forward(floating[:, :, :, ::1] x):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int ho = h // 2, wo = w // 2
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((n, c, ho, wo), dtype=dtype)
    idx_arr = np.empty((n, c, ho, wo), dtype=np.uint8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef int b, ci, oh, ow, di, dj, k
    cdef floating best, v
    cdef unsigned char besti
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        best = x[b, ci, 2 * oh, 2 * ow]
                        besti = 0
                        k = 0
                        for di in range(2):
                            for dj in range(2):
                                v = x[b, ci, 2 * oh + di, 2 * ow + dj]
                                if v > best:
                                    best = v
                                    besti = <unsigned char> k
                                k += 1
                        out[b, ci, oh, ow] = best
                        idx[b, ci, oh, ow] = besti
    return out_arr, idx_arr


def maxpool2x2_backward(floating[:, :, :, ::1] grad_out, unsigned char[:, :, :, ::1] idx):
    cdef int n = grad_out.shape[0], c = grad_out.shape[1]
    cdef int ho = grad_out.shape[2], wo = grad_out.shape[3]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c, ho * 2, wo * 2), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef int b, ci, oh, ow, k
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        k = idx[b, ci, oh, ow]
                        out[b, ci, 2 * oh + k // 2, 2 * ow + k % 2] = grad_out[b, ci, oh, ow]
    return out_arr


def upsample2x_forward(floating[:, :, :, ::1] x):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((n, c, h * 2, w * 2), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef int b, ci, ih, iw
    cdef floating v
    with nogil:
        for b in range(n):
            for ci in range(c):
                for ih in range(h):
                    for iw in range(w):
                        v = x[b, ci, ih, iw]
                        out[b, ci, 2 * ih, 2 * iw] = v
                        out[b, ci, 2 * ih, 2 * iw + 1] = v
                        out[b, ci, 2 * ih + 1, 2 * iw] = v
                        out[b, ci, 2 * ih + 1, 2 * iw + 1] = v
    return out_arr


def upsample2x_backward(floating[:, :, :, ::1] grad_out):
    cdef int n = grad_out.shape[0], c = grad_out.shape[1]
    cdef int h = grad_out.shape[2] // 2, w = grad_out.shape[3] // 2
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef int b, ci, ih, iw
    with nogil:
        for b in range(n):
            for ci in range(c):
                for ih in range(h):
                    for iw in range(w):
                        out[b, ci, ih, iw] = (
                            grad_out[b, ci, 2 * ih, 2 * iw]
                            + grad_out[b, ci, 2 * ih, 2 * iw + 1]
                            + grad_out[b, ci, 2 * ih + 1, 2 * iw]
                            + grad_out[b, ci, 2 * ih + 1, 2 * iw + 1]
                        )
    return out_arr
