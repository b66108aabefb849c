"""Kernel backend selection.

The compiled extension (Cython) is preferred when it imported cleanly; the
numpy implementation is the fallback. ``BIOFED_KERNELS=numpy|cython|auto``
overrides the choice, and tests/benchmarks can switch per-call via
``get_backend``/``set_backend``.
"""

import os

from . import numpy_backend

try:
    from . import _cykernels
except ImportError:
    _cykernels = None

_BACKENDS = {"numpy": numpy_backend}
if _cykernels is not None:
    _BACKENDS["cython"] = _cykernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}") from None


def _select_default():
    choice = os.environ.get("BIOFED_KERNELS", "auto").lower()
    if choice == "auto":
        return _BACKENDS.get("cython", numpy_backend)
    return get_backend(choice)


_active = _select_default()


def set_backend(name):
    """Switch the process-wide backend. Returns the previous backend name."""
    global _active
    previous = _active.NAME
    _active = get_backend(name)
    return previous


def backend_name():
    return _active.NAME


def conv2d_forward(x, w, b, stride, padding):
    return _active.conv2d_forward(x, w, b, stride, padding)


def conv2d_backward(x, w, dy, stride, padding):
    return _active.conv2d_backward(x, w, dy, stride, padding)


def maxpool2d_forward(x, window, stride):
    return _active.maxpool2d_forward(x, window, stride)


def maxpool2d_backward(idx, dy, input_shape):
    return _active.maxpool2d_backward(idx, dy, input_shape)
