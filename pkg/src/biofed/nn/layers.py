"""Layer definitions and shape inference.

A model is a flat list of layer objects. Shape inference is a pure function
of that list and the input shape, so the forward pass can validate every
boundary and name the offending layer on mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ShapeMismatchError


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0

    kind = "conv2d"

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeMismatchError(
                f"conv2d expects {self.in_channels} input channels, got {c}"
            )
        ho = (h + 2 * self.padding - self.kernel_size) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_size) // self.stride + 1
        if ho <= 0 or wo <= 0:
            raise ShapeMismatchError(
                f"conv2d kernel {self.kernel_size} does not fit input {h}x{w}"
            )
        return (self.out_channels, ho, wo)

    def param_shapes(self):
        k = self.kernel_size
        return {
            "weight": (self.out_channels, self.in_channels, k, k),
            "bias": (self.out_channels,),
        }


@dataclass(frozen=True)
class MaxPool2d:
    window: int
    stride: int = 0  # 0 means same as window

    kind = "maxpool2d"

    @property
    def effective_stride(self):
        return self.stride or self.window

    def out_shape(self, in_shape):
        c, h, w = in_shape
        s = self.effective_stride
        ho = (h - self.window) // s + 1
        wo = (w - self.window) // s + 1
        if ho <= 0 or wo <= 0:
            raise ShapeMismatchError(f"maxpool2d window {self.window} does not fit input {h}x{w}")
        return (c, ho, wo)

    def param_shapes(self):
        return {}


@dataclass(frozen=True)
class ReLU:
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def param_shapes(self):
        return {}


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)

    def param_shapes(self):
        return {}


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int

    kind = "dense"

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeMismatchError(
                f"dense expects flat input of {self.in_features} features, got {in_shape}"
            )
        return (self.out_features,)

    def param_shapes(self):
        return {
            "weight": (self.out_features, self.in_features),
            "bias": (self.out_features,),
        }


def infer_shapes(layers, input_shape):
    """Per-layer output shapes (excluding the batch axis).

    Raises ShapeMismatchError naming the offending layer.
    """
    shapes = [tuple(input_shape)]
    for i, layer in enumerate(layers):
        try:
            shapes.append(layer.out_shape(shapes[-1]))
        except ShapeMismatchError as exc:
            raise ShapeMismatchError(f"layer {i} ({layer.kind}): {exc}") from None
    return shapes


def param_name(index, layer, field):
    return f"{index}.{layer.kind}.{field}"
