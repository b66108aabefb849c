# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled conv/pool kernels: direct loops with float64 accumulators.

Semantics match numpy_backend exactly: same output shapes, same first-max
tie-break in pooling, float64 accumulation cast back to the input dtype.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double

NAME = "cython"


def conv2d_forward(x_arr, w_arr, b_arr, int stride, int padding):
    if x_arr.dtype == np.float32:
        return _conv2d_forward[float](x_arr, w_arr, b_arr, stride, padding)
    return _conv2d_forward[double](x_arr, w_arr, b_arr, stride, padding)


def conv2d_backward(x_arr, w_arr, dy_arr, int stride, int padding):
    if x_arr.dtype == np.float32:
        return _conv2d_backward[float](x_arr, w_arr, dy_arr, stride, padding)
    return _conv2d_backward[double](x_arr, w_arr, dy_arr, stride, padding)


def maxpool2d_forward(x_arr, int window, int stride):
    if x_arr.dtype == np.float32:
        return _maxpool2d_forward[float](x_arr, window, stride)
    return _maxpool2d_forward[double](x_arr, window, stride)


def maxpool2d_backward(idx_arr, dy_arr, input_shape):
    n, c, h, w = input_shape
    if dy_arr.dtype == np.float32:
        return _maxpool2d_backward[float](idx_arr, dy_arr, n, c, h, w)
    return _maxpool2d_backward[double](idx_arr, dy_arr, n, c, h, w)


cdef _conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b,
                     int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * padding - kw) // stride + 1

    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((n, o, ho, wo), dtype=dtype)
    cdef real[:, :, :, ::1] y = y_arr

    cdef Py_ssize_t ni, oi, i, j, ci, u, v, hi, wi
    cdef double acc
    with nogil:
        for ni in range(n):
            for oi in range(o):
                for i in range(ho):
                    for j in range(wo):
                        acc = b[oi]
                        for ci in range(c):
                            for u in range(kh):
                                hi = i * stride - padding + u
                                if hi < 0 or hi >= h:
                                    continue
                                for v in range(kw):
                                    wi = j * stride - padding + v
                                    if wi < 0 or wi >= wd:
                                        continue
                                    acc += <double> x[ni, ci, hi, wi] * <double> w[oi, ci, u, v]
                        y[ni, oi, i, j] = <real> acc
    return y_arr


cdef _conv2d_backward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                      real[:, :, :, ::1] dy, int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = dy.shape[2], wo = dy.shape[3]

    dx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    dw_arr = np.zeros((o, c, kh, kw), dtype=np.float64)
    db_arr = np.zeros(o, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr

    cdef Py_ssize_t ni, oi, i, j, ci, u, v, hi, wi
    cdef double g
    with nogil:
        for ni in range(n):
            for oi in range(o):
                for i in range(ho):
                    for j in range(wo):
                        g = <double> dy[ni, oi, i, j]
                        db[oi] += g
                        for ci in range(c):
                            for u in range(kh):
                                hi = i * stride - padding + u
                                if hi < 0 or hi >= h:
                                    continue
                                for v in range(kw):
                                    wi = j * stride - padding + v
                                    if wi < 0 or wi >= wd:
                                        continue
                                    dw[oi, ci, u, v] += <double> x[ni, ci, hi, wi] * g
                                    dx[ni, ci, hi, wi] += <double> w[oi, ci, u, v] * g

    dtype = np.float32 if real is float else np.float64
    return dx_arr.astype(dtype), dw_arr.astype(dtype), db_arr.astype(dtype)


cdef _maxpool2d_forward(real[:, :, :, ::1] x, int window, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h - window) // stride + 1
    cdef Py_ssize_t wo = (w - window) // stride + 1

    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((n, c, ho, wo), dtype=dtype)
    idx_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef real[:, :, :, ::1] y = y_arr
    cdef long long[:, :, :, ::1] idx = idx_arr

    cdef Py_ssize_t ni, ci, i, j, u, v, hi, wi, best_pos
    cdef real best, val
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[ni, ci, i * stride, j * stride]
                        best_pos = (i * stride) * w + j * stride
                        for u in range(window):
                            hi = i * stride + u
                            for v in range(window):
                                wi = j * stride + v
                                val = x[ni, ci, hi, wi]
                                if val > best:
                                    best = val
                                    best_pos = hi * w + wi
                        y[ni, ci, i, j] = best
                        idx[ni, ci, i, j] = best_pos
    return y_arr, idx_arr


cdef _maxpool2d_backward(long long[:, :, :, ::1] idx, real[:, :, :, ::1] dy,
                         Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w):
    dx_arr = np.zeros((n, c, h * w), dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t ni, ci, i, j
    cdef Py_ssize_t ho = dy.shape[2], wo = dy.shape[3]
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(ho):
                    for j in range(wo):
                        dx[ni, ci, idx[ni, ci, i, j]] += <double> dy[ni, ci, i, j]
    dtype = np.float32 if real is float else np.float64
    return dx_arr.reshape(n, c, h, w).astype(dtype)
