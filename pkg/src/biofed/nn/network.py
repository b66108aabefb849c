"""The feed-forward engine: init, forward, and backprop over a layer stack."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError, ShapeMismatchError
from . import kernels
from .layers import Conv2d, Dense, Flatten, MaxPool2d, ReLU, infer_shapes, param_name
from .loss import softmax_cross_entropy, softmax_cross_entropy_backward
from .params import ModelParameters

INIT_DOMAIN = 1  # seed-stream namespace for weight init


class Network:
    """A fixed stack of layers over (N, C, H, W) float batches.

    The network owns no parameters; every call takes a ModelParameters whose
    schema must match ``param_schema()``.
    """

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.shapes = infer_shapes(self.layers, self.input_shape)
        if len(self.shapes[-1]) != 1:
            raise ShapeMismatchError(
                f"network must end with a flat logits layer, got shape {self.shapes[-1]}"
            )
        self.num_classes = self.shapes[-1][0]

    def output_shape(self):
        return self.shapes[-1]

    def param_schema(self):
        names = []
        for i, layer in enumerate(self.layers):
            for field, shape in layer.param_shapes().items():
                names.append((param_name(i, layer, field), shape))
        return names

    def init_params(self, seed, dtype=np.float32):
        """Fan-in-scaled uniform init from a per-layer seed-derived generator."""
        entries = []
        for i, layer in enumerate(self.layers):
            shapes = layer.param_shapes()
            if not shapes:
                continue
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(INIT_DOMAIN, i)))
            for field, shape in shapes.items():
                if field == "bias":
                    arr = np.zeros(shape, dtype=dtype)
                else:
                    fan_in = int(np.prod(shape[1:]))
                    bound = float(np.sqrt(6.0 / fan_in))
                    arr = rng.uniform(-bound, bound, size=shape).astype(dtype)
                entries.append((param_name(i, layer, field), arr))
        return ModelParameters(entries)

    def _check_batch(self, x):
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"batch shape {x.shape} does not match input shape (N, {', '.join(map(str, self.input_shape))})"
            )

    def _layer_params(self, params, i, layer):
        w = params[param_name(i, layer, "weight")]
        b = params[param_name(i, layer, "bias")]
        return w, b

    def forward(self, params, x):
        logits, _ = self._forward(params, x, keep_cache=False)
        return logits

    def _forward(self, params, x, keep_cache):
        self._check_batch(x)
        x = np.ascontiguousarray(x)
        caches = []
        out = x
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2d):
                w, b = self._layer_params(params, i, layer)
                inp = out
                out = kernels.conv2d_forward(inp, w, b, layer.stride, layer.padding)
                cache = inp
            elif isinstance(layer, MaxPool2d):
                inp_shape = out.shape
                out, idx = kernels.maxpool2d_forward(out, layer.window, layer.effective_stride)
                cache = (idx, inp_shape)
            elif isinstance(layer, ReLU):
                mask = out > 0
                out = out * mask
                cache = mask
            elif isinstance(layer, Flatten):
                cache = out.shape
                out = out.reshape(out.shape[0], -1)
            elif isinstance(layer, Dense):
                w, b = self._layer_params(params, i, layer)
                inp = out
                out = inp @ w.T + b
                cache = inp
            else:
                raise ShapeMismatchError(f"layer {i}: unknown layer kind {layer!r}")
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(f"layer {i} ({layer.kind}) produced non-finite values")
            if keep_cache:
                caches.append(cache)
        return out, caches

    def loss(self, params, x, labels):
        logits = self.forward(params, x)
        loss, _ = softmax_cross_entropy(logits, labels)
        return loss

    def backward(self, params, x, labels):
        """Loss, probabilities, and per-parameter gradients for one batch.

        The gradient set carries the same names and shapes as ``params``
        (equal schema hash).
        """
        logits, caches = self._forward(params, x, keep_cache=True)
        loss, probs = softmax_cross_entropy(logits, labels)
        grad = softmax_cross_entropy_backward(probs, labels)

        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            cache = caches[i]
            if isinstance(layer, Dense):
                w, _ = self._layer_params(params, i, layer)
                inp = cache
                g64 = grad.astype(np.float64)
                grads[param_name(i, layer, "weight")] = (g64.T @ inp.astype(np.float64)).astype(w.dtype)
                grads[param_name(i, layer, "bias")] = g64.sum(axis=0).astype(w.dtype)
                grad = (grad @ w).astype(w.dtype)
            elif isinstance(layer, Flatten):
                grad = grad.reshape(cache)
            elif isinstance(layer, ReLU):
                grad = grad * cache
            elif isinstance(layer, MaxPool2d):
                idx, inp_shape = cache
                grad = kernels.maxpool2d_backward(idx, np.ascontiguousarray(grad), inp_shape)
            elif isinstance(layer, Conv2d):
                w, _ = self._layer_params(params, i, layer)
                inp = cache
                grad = np.ascontiguousarray(grad)
                dx, dw, db = kernels.conv2d_backward(inp, w, grad, layer.stride, layer.padding)
                grads[param_name(i, layer, "weight")] = dw
                grads[param_name(i, layer, "bias")] = db
                grad = dx
        ordered = ModelParameters([(name, grads[name]) for name in params.names()])
        return loss, probs, ordered


def reference_network(image_shape, num_classes):
    """The small conv-relu-pool x2 + dense classifier used throughout.

    Works for any (C, H, W) with H, W divisible by 4.
    """
    c, h, w = image_shape
    layers = [
        Conv2d(c, 8, kernel_size=3, stride=1, padding=1),
        ReLU(),
        MaxPool2d(2),
        Conv2d(8, 16, kernel_size=3, stride=1, padding=1),
        ReLU(),
        MaxPool2d(2),
        Flatten(),
        Dense(16 * (h // 4) * (w // 4), num_classes),
    ]
    return Network(layers, image_shape)
