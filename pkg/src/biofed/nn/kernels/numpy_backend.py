"""Vectorized numpy kernels: the always-available fallback backend.

Convolution uses an im2col layout and a float64 matmul; max pooling records
the flat index of the winning element (first maximum in row-major window
order) so the backward pass scatters deterministically. Outputs are cast
back to the input dtype.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _out_hw(h, w, kh, kw, stride, padding):
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    return ho, wo


def _patches(x, kh, kw, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]  # (N, C, Ho, Wo, kh, kw)


def conv2d_forward(x, w, b, stride, padding):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho, wo = _out_hw(h, wd, kh, kw, stride, padding)
    cols = _patches(x, kh, kw, stride, padding)
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    y64 = cols.astype(np.float64) @ w.reshape(o, -1).astype(np.float64).T
    y64 += b.astype(np.float64)
    y = y64.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y, dtype=x.dtype)


def conv2d_backward(x, w, dy, stride, padding):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho, wo = dy.shape[2], dy.shape[3]

    dy2 = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, o).astype(np.float64)
    cols = _patches(x, kh, kw, stride, padding)
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)

    db = dy.astype(np.float64).sum(axis=(0, 2, 3))
    dw = (dy2.T @ cols.astype(np.float64)).reshape(o, c, kh, kw)

    # col2im: scatter-add patch gradients back onto the (padded) input grid.
    g = dy2 @ w.reshape(o, -1).astype(np.float64)
    g = g.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u:u + ho * stride:stride, v:v + wo * stride:stride] += g[:, :, u, v]
    if padding:
        dx = dxp[:, :, padding:padding + h, padding:padding + wd]
    else:
        dx = dxp
    return (
        np.ascontiguousarray(dx, dtype=x.dtype),
        dw.astype(x.dtype),
        db.astype(x.dtype),
    )


def maxpool2d_forward(x, window, stride):
    n, c, h, w = x.shape
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, window * window)
    k = flat.argmax(axis=-1)  # first max wins on ties
    y = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]
    u, v = np.divmod(k, window)
    rows = np.arange(ho)[None, None, :, None] * stride + u
    cols = np.arange(wo)[None, None, None, :] * stride + v
    idx = (rows * w + cols).astype(np.int64)
    return np.ascontiguousarray(y, dtype=x.dtype), np.ascontiguousarray(idx)


def maxpool2d_backward(idx, dy, input_shape):
    n, c, h, w = input_shape
    dx = np.zeros((n, c, h * w), dtype=np.float64)
    np.add.at(
        dx,
        (
            np.arange(n)[:, None, None, None],
            np.arange(c)[None, :, None, None],
            idx,
        ),
        dy.astype(np.float64),
    )
    return dx.reshape(n, c, h, w).astype(dy.dtype)
