"""Deterministic synthetic image generator.

Each class is a sinusoidal grating with its own orientation, spatial
frequency, and phase; samples add seeded Gaussian pixel noise, are clipped to
[0, 1] and quantized to 8 bits, then run through the normal preprocessing
path. Every sample is regenerable in isolation from (seed, class, index), so
manifests carry no image files, only an origin block.
"""

from __future__ import annotations

import math
import re

import numpy as np

from ..errors import CorruptImageError, ValidationError
from .images import RawImage, preprocess
from .manifest import (
    DEFAULT_MEAN,
    DEFAULT_STD,
    DEFAULT_TEST_FRACTION,
    Dataset,
    DatasetManifest,
    SampleRef,
    derive_split,
)

SITES = ("blood", "urine", "skin")
ORIENTATIONS = 11
FREQUENCIES = (2.0, 3.0, 5.0)
NOISE_DOMAIN = 5
GOLDEN = 0.6180339887498949

_UID = re.compile(r"^syn/(\d{3})/(\d{4})$")


def sample_uid(label, index):
    return f"syn/{label:03d}/{index:04d}"


def parse_uid(uid):
    m = _UID.match(uid)
    if not m:
        raise CorruptImageError(f"not a synthetic sample id: {uid!r}")
    return int(m.group(1)), int(m.group(2))


def class_pattern(label, shape):
    """Noise-free grating for one class, values in [0.05, 0.95]."""
    c, h, w = shape
    theta = math.pi * (label % ORIENTATIONS) / ORIENTATIONS
    freq = FREQUENCIES[(label // ORIENTATIONS) % len(FREQUENCIES)]
    phase = 2.0 * math.pi * ((label * GOLDEN) % 1.0)
    v, u = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    axis = math.cos(theta) * u + math.sin(theta) * v
    planes = []
    for ch in range(c):
        shift = phase + 2.0 * math.pi * ch / 3.0
        planes.append(0.5 + 0.45 * np.sin(2.0 * math.pi * freq * axis + shift))
    return np.stack(planes)


def sample_pixels(seed, noise, shape, label, index):
    """Quantized uint8 pixels for one synthetic sample."""
    base = class_pattern(label, shape)
    if noise > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence((seed, NOISE_DOMAIN, label, index)))
        base = base + noise * rng.standard_normal(base.shape)
    clipped = np.clip(base, 0.0, 1.0)
    return np.round(clipped * 255.0).astype(np.uint8)


def _tensor(origin, image_shape, mean, std, label, index):
    pixels = sample_pixels(origin["seed"], origin["noise"], image_shape, label, index)
    return preprocess(RawImage(pixels, 255), image_shape, mean, std)


def regenerate_tensor(manifest, uid):
    """Rebuild one sample's preprocessed tensor from a synthetic manifest."""
    label, index = parse_uid(uid)
    return _tensor(manifest.origin, manifest.image_shape, manifest.mean, manifest.std, label, index)


def synthesize(
    num_classes,
    samples_per_class,
    image_shape=(1, 16, 16),
    seed=0,
    noise=0.1,
    test_fraction=DEFAULT_TEST_FRACTION,
):
    """Generate a fully in-memory dataset of class-distinguishable textures."""
    problems = []
    if num_classes < 1:
        problems.append(("num_classes", f"must be positive, got {num_classes}"))
    if samples_per_class < 2:
        problems.append(("samples_per_class", f"must be at least 2 for a train/test split, got {samples_per_class}"))
    shape = tuple(int(v) for v in image_shape)
    if len(shape) != 3 or any(v < 1 for v in shape):
        problems.append(("image_shape", f"must be (C, H, W) positive, got {image_shape}"))
    if noise < 0.0:
        problems.append(("noise", f"must be nonnegative, got {noise}"))
    if problems:
        raise ValidationError(problems)

    samples = [
        SampleRef(sample_uid(c, i), c, SITES[i % len(SITES)])
        for c in range(num_classes)
        for i in range(samples_per_class)
    ]
    samples = derive_split(samples, seed, test_fraction)
    origin = {
        "kind": "synthetic",
        "seed": int(seed),
        "noise": float(noise),
        "samples_per_class": int(samples_per_class),
    }
    channels = shape[0]
    manifest = DatasetManifest(
        classes=tuple(f"species-{c:02d}" for c in range(num_classes)),
        image_shape=shape,
        samples=tuple(samples),
        mean=(DEFAULT_MEAN,) * channels,
        std=(DEFAULT_STD,) * channels,
        seed=int(seed),
        origin=origin,
    )
    frames = [
        _tensor(origin, shape, manifest.mean, manifest.std, s.label, parse_uid(s.uid)[1])
        for s in manifest.samples
    ]
    x = np.stack(frames).astype(np.float32)
    y = np.array([s.label for s in manifest.samples], dtype=np.int64)
    return Dataset(manifest, x, y)
