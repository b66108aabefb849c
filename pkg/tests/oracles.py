"""Independent reference implementations used to check the engine.

Everything here is deliberately written the slow, obvious way (nested loops,
math.fsum) so a bug in the engine cannot hide in a shared shortcut.
"""

import math

import numpy as np


def conv2d_oracle(x, w, b, stride, padding):
    """Plain nested-loop cross-correlation, float64 throughout."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    w64 = w.astype(np.float64)
    y = np.zeros((n, o, ho, wo), dtype=np.float64)
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = float(b[oi])
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[ni, ci, i * stride + u, j * stride + v] * w64[oi, ci, u, v]
                    y[ni, oi, i, j] = acc
    return y


def maxpool2d_oracle(x, window, stride):
    """Nested-loop max pooling, first maximum in row-major window order wins."""
    n, c, h, w = x.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    y = np.zeros((n, c, ho, wo), dtype=x.dtype)
    idx = np.zeros((n, c, ho, wo), dtype=np.int64)
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = None
                    for u in range(window):
                        for v in range(window):
                            val = x[ni, ci, i * stride + u, j * stride + v]
                            if best is None or val > best:
                                best = val
                                pos = (i * stride + u) * w + (j * stride + v)
                    y[ni, ci, i, j] = best
                    idx[ni, ci, i, j] = pos
    return y, idx


def rel_err(a, b):
    """Tensor-level relative error: max|a-b| / max(1, max|a|, max|b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(1.0, float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)))
    return float(np.abs(a - b).max(initial=0.0)) / denom


def fd_param_grads(network, params, x, labels, eps=1e-5):
    """Central finite differences of the mean loss w.r.t. every parameter.

    Mutates each float64 parameter entry in place and restores it, so the
    params passed in must be a float64 set. Returns {name: grad array}.
    """
    grads = {}
    for name, arr in params.items():
        assert arr.dtype == np.float64, "finite differences need float64 parameters"
        flat = arr.reshape(-1)
        g = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = float(flat[i])
            h = eps * max(1.0, abs(orig))
            flat[i] = orig + h
            lp = network.loss(params, x, labels)
            flat[i] = orig - h
            lm = network.loss(params, x, labels)
            flat[i] = orig
            g[i] = (lp - lm) / (2.0 * h)
        grads[name] = g.reshape(arr.shape)
    return grads


def fd_array_grad(fn, arr, eps=1e-5):
    """Central finite differences of scalar fn w.r.t. a float64 array."""
    assert arr.dtype == np.float64
    flat = arr.reshape(-1)
    g = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size):
        orig = float(flat[i])
        h = eps * max(1.0, abs(orig))
        flat[i] = orig + h
        lp = fn(arr)
        flat[i] = orig - h
        lm = fn(arr)
        flat[i] = orig
        g[i] = (lp - lm) / (2.0 * h)
    return g.reshape(arr.shape)


def fedavg_oracle(results):
    """Per-element weighted mean via math.fsum over unsorted results."""
    total = float(sum(r.num_examples for r in results))
    out = {}
    for name in results[0].params.names():
        shape = results[0].params[name].shape
        flats = [r.params[name].astype(np.float64).reshape(-1) for r in results]
        weights = [float(r.num_examples) for r in results]
        vals = [
            math.fsum(w * f[i] for w, f in zip(weights, flats)) / total
            for i in range(flats[0].size)
        ]
        out[name] = np.array(vals, dtype=np.float64).reshape(shape)
    return out
