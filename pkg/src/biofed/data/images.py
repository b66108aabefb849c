"""Image decoding and preprocessing.

Supported inputs are the binary netpbm family (P5 grayscale, P6 color) and a
raw-tensor sidecar: a single-entry model checkpoint holding one float tensor
that is already scaled/standardized (the escape hatch for arbitrary data).

Preprocessing takes a raw image to a standardized float32 (C, H, W) tensor:
nearest-neighbor resize, scale by the image's maxval into [0, 1], then
per-channel (x - mean) / std with the constants recorded in the manifest.
Tensors that are already float and target-shaped pass through unchanged,
which makes the tensor stage idempotent.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import CorruptImageError, UnsupportedFormatError
from ..nn.params import ModelParameters

SIDECAR_TENSOR_NAME = "image"


class RawImage(NamedTuple):
    """Decoded pixels (C, H, W) uint8 plus the format's declared maxval."""

    pixels: np.ndarray
    maxval: int


def _read_token(data, pos):
    # netpbm headers: tokens separated by whitespace, '#' starts a comment
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise CorruptImageError("unexpected end of netpbm header")
    return data[start:pos], pos


def decode_netpbm(data: bytes) -> RawImage:
    if len(data) < 2:
        raise CorruptImageError("file too short for a netpbm image")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"unsupported image magic {magic!r} (binary P5/P6 only)")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    try:
        wtok, pos = _read_token(data, pos)
        htok, pos = _read_token(data, pos)
        mtok, pos = _read_token(data, pos)
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except ValueError as exc:
        raise CorruptImageError(f"bad netpbm header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise CorruptImageError(f"bad netpbm dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise UnsupportedFormatError(f"maxval {maxval} unsupported (8-bit only)")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * channels
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise CorruptImageError(f"raster has {len(raster)} bytes, expected {expected}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    pixels = np.ascontiguousarray(arr.transpose(2, 0, 1))
    if pixels.max(initial=0) > maxval:
        raise CorruptImageError("pixel value exceeds declared maxval")
    return RawImage(pixels, maxval)


def encode_netpbm(image: RawImage) -> bytes:
    c, h, w = image.pixels.shape
    if c == 1:
        magic = b"P5"
    elif c == 3:
        magic = b"P6"
    else:
        raise UnsupportedFormatError(f"cannot encode {c}-channel image as netpbm")
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, image.maxval)
    return header + image.pixels.transpose(1, 2, 0).tobytes()


def read_image(path) -> "RawImage | np.ndarray":
    """Decode a file: RawImage for netpbm, float tensor for .bfck sidecars."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == b"BFCK":
        params, _ = ModelParameters.from_bytes(data)
        names = params.names()
        if names != [SIDECAR_TENSOR_NAME]:
            raise CorruptImageError(f"sidecar must hold one {SIDECAR_TENSOR_NAME!r} tensor, got {names}")
        arr = params[SIDECAR_TENSOR_NAME]
        if arr.ndim != 3:
            raise CorruptImageError(f"sidecar tensor must be (C, H, W), got shape {arr.shape}")
        return arr
    return decode_netpbm(data)


def write_sidecar(path, tensor):
    ModelParameters([(SIDECAR_TENSOR_NAME, np.asarray(tensor, dtype=np.float32))]).save(path)


def resize_nearest(pixels, out_h, out_w):
    """Integer-only nearest-neighbor resize of a (C, H, W) array."""
    _, h, w = pixels.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return pixels[:, rows[:, None], cols[None, :]]


def preprocess(image, target_shape, mean, std):
    """Raw image or prepared tensor -> standardized float32 (C, H, W)."""
    c, h, w = target_shape
    if isinstance(image, RawImage):
        pixels, maxval = image
    else:
        arr = np.asarray(image)
        if arr.dtype == np.uint8:
            pixels, maxval = arr, 255
        else:
            # Already a prepared float tensor: resize only, never re-standardize.
            if arr.ndim != 3 or arr.shape[0] != c:
                raise CorruptImageError(f"prepared tensor shape {arr.shape} incompatible with {target_shape}")
            if arr.shape == (c, h, w):
                return arr.astype(np.float32)
            return resize_nearest(arr, h, w).astype(np.float32)
    if pixels.ndim != 3:
        raise CorruptImageError(f"raw image must be (C, H, W), got shape {pixels.shape}")
    if pixels.shape[0] != c:
        if pixels.shape[0] == 3 and c == 1:
            # integer-mean grayscale conversion, still exact arithmetic
            pixels = (pixels.astype(np.uint16).sum(axis=0) // 3).astype(np.uint8)[None]
        else:
            raise CorruptImageError(f"image has {pixels.shape[0]} channels, target wants {c}")
    pixels = resize_nearest(pixels, h, w)
    scaled = pixels.astype(np.float32) / np.float32(maxval)
    mean = np.asarray(mean, dtype=np.float32).reshape(c, 1, 1)
    std = np.asarray(std, dtype=np.float32).reshape(c, 1, 1)
    return (scaled - mean) / std
