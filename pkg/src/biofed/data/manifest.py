"""Dataset catalog: sample listing, validation, and the train/test split.

A manifest file is JSON with at least ``classes`` (ordered class names),
``image_shape`` ([C, H, W] after preprocessing) and ``samples`` (objects with
``path``, ``class`` and ``site``). Optional fields: per-channel ``mean`` and
``std`` standardization constants, a recorded ``seed``, per-sample ``split``
assignments, and an ``origin`` block describing how to regenerate tensors for
datasets that have no backing files.

The split is derived per sample from a seeded hash, stratified by class so
that every class keeps at least one sample on each side.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from ..errors import (
    CorruptImageError,
    DataError,
    MissingFileError,
    UnsupportedFormatError,
    ValidationError,
)
from .images import preprocess, read_image

DEFAULT_TEST_FRACTION = 0.2
DEFAULT_MEAN = 0.5
DEFAULT_STD = 0.5

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class SampleRef:
    """One catalog entry: file path (or synthetic id), class index, site tag."""

    uid: str
    label: int
    site: str
    split: str = ""


@dataclass(frozen=True)
class SourceSite:
    """A sample-origin tag, valid only within a manifest's site vocabulary."""

    tag: str

    def check(self, vocabulary):
        if self.tag not in vocabulary:
            raise ValidationError([("site", f"unknown site {self.tag!r}, known: {sorted(vocabulary)}")])
        return self


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple
    image_shape: tuple
    samples: tuple
    mean: tuple
    std: tuple
    seed: int = 0
    origin: "dict | None" = None
    root: "str | None" = None

    @property
    def num_classes(self):
        return len(self.classes)

    @property
    def sites(self):
        return tuple(sorted({s.site for s in self.samples}))

    def indices(self, split):
        return [i for i, s in enumerate(self.samples) if s.split == split]

    def train_indices(self):
        return self.indices(TRAIN)

    def test_indices(self):
        return self.indices(TEST)

    def class_name(self, index):
        return self.classes[index]


def split_key(seed, uid):
    """Stable per-sample ordering key for the train/test split."""
    return hashlib.sha256(f"{seed}:{uid}".encode()).hexdigest()


def derive_split(samples, seed, test_fraction=DEFAULT_TEST_FRACTION):
    """Assign train/test per sample, stratified by class.

    Within each class, samples are ordered by a seeded hash of their uid and
    the first ``max(1, round(test_fraction * n))`` become the test side. Each
    class must end up with at least one sample on both sides, so classes with
    fewer than two samples are rejected.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError([("test_fraction", f"must be in (0, 1), got {test_fraction}")])
    by_class = {}
    for i, s in enumerate(samples):
        by_class.setdefault(s.label, []).append(i)
    assignment = [""] * len(samples)
    starved = [label for label, idx in sorted(by_class.items()) if len(idx) < 2]
    if starved:
        raise DataError(
            f"classes {starved} have fewer than 2 samples and cannot receive both a train and a test sample"
        )
    for label, idx in by_class.items():
        ordered = sorted(idx, key=lambda i: (split_key(seed, samples[i].uid), samples[i].uid))
        n = len(ordered)
        n_test = min(max(1, round(test_fraction * n)), n - 1)
        for rank, i in enumerate(ordered):
            assignment[i] = TEST if rank < n_test else TRAIN
    return [replace(s, split=assignment[i]) for i, s in enumerate(samples)]


def _as_channel_tuple(value, channels, field, problems):
    if isinstance(value, (int, float)):
        value = [value] * channels
    value = list(value)
    if len(value) != channels:
        problems.append((field, f"needs {channels} entries, got {len(value)}"))
        return tuple(float(v) for v in value) if value else (0.0,) * channels
    return tuple(float(v) for v in value)


def manifest_from_dict(doc, seed=0, test_fraction=DEFAULT_TEST_FRACTION, root=None):
    """Validate a parsed manifest document and derive any missing split."""
    problems = []
    if not isinstance(doc, dict):
        raise ValidationError([("", f"manifest must be a JSON object, got {type(doc).__name__}")])

    classes = doc.get("classes")
    if not isinstance(classes, list) or not classes or not all(isinstance(c, str) for c in classes):
        problems.append(("classes", "must be a non-empty list of strings"))
        classes = [str(c) for c in classes] if isinstance(classes, list) else []
    if len(set(classes)) != len(classes):
        problems.append(("classes", "names must be unique"))

    shape = doc.get("image_shape")
    if not (isinstance(shape, list) and len(shape) == 3 and all(isinstance(v, int) and v > 0 for v in shape)):
        problems.append(("image_shape", f"must be [C, H, W] positive integers, got {shape!r}"))
        shape = [1, 1, 1]
    channels = shape[0]

    mean = _as_channel_tuple(doc.get("mean", DEFAULT_MEAN), channels, "mean", problems)
    std = _as_channel_tuple(doc.get("std", DEFAULT_STD), channels, "std", problems)
    if any(v == 0.0 for v in std):
        problems.append(("std", "entries must be nonzero"))

    raw_samples = doc.get("samples")
    if not isinstance(raw_samples, list) or not raw_samples:
        problems.append(("samples", "must be a non-empty list"))
        raw_samples = []

    seed = int(doc.get("seed", seed))
    samples = []
    seen = set()
    have_split = 0
    for i, entry in enumerate(raw_samples):
        where = f"samples[{i}]"
        if not isinstance(entry, dict):
            problems.append((where, "must be an object"))
            continue
        uid = entry.get("path")
        label = entry.get("class")
        site = entry.get("site")
        split = entry.get("split", "")
        if not isinstance(uid, str) or not uid:
            problems.append((f"{where}.path", "must be a non-empty string"))
            continue
        if uid in seen:
            problems.append((f"{where}.path", f"duplicate path {uid!r}"))
        seen.add(uid)
        if not isinstance(label, int) or not 0 <= label < len(classes):
            problems.append((f"{where}.class", f"must be an integer in [0, {len(classes)}), got {label!r}"))
            continue
        if not isinstance(site, str) or not site:
            problems.append((f"{where}.site", "must be a non-empty string"))
            continue
        if split not in ("", TRAIN, TEST):
            problems.append((f"{where}.split", f"must be {TRAIN!r} or {TEST!r}, got {split!r}"))
            continue
        if split:
            have_split += 1
        samples.append(SampleRef(uid, label, site, split))

    if problems:
        raise ValidationError(problems)

    if have_split == len(samples):
        for label in range(len(classes)):
            splits = {s.split for s in samples if s.label == label}
            if splits != {TRAIN, TEST}:
                raise DataError(f"class {label} ({classes[label]}) is missing a train or test sample")
    else:
        samples = derive_split(samples, seed, test_fraction)

    present = {s.label for s in samples}
    missing = [c for c in range(len(classes)) if c not in present]
    if missing:
        raise ValidationError([("samples", f"classes with no samples: {missing}")])

    origin = doc.get("origin")
    if origin is not None and not isinstance(origin, dict):
        raise ValidationError([("origin", "must be an object when present")])

    return DatasetManifest(
        classes=tuple(classes),
        image_shape=tuple(shape),
        samples=tuple(samples),
        mean=mean,
        std=std,
        seed=seed,
        origin=origin,
        root=root,
    )


def ingest(manifest_file, seed=0, test_fraction=DEFAULT_TEST_FRACTION, check_files=True):
    """Parse, validate, and split a manifest file.

    Referenced image files must exist and decode unless the manifest carries
    an ``origin`` block (tensors regenerated, nothing on disk to check).
    """
    try:
        with open(manifest_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise MissingFileError(f"manifest file not found: {manifest_file}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError([("", f"manifest is not valid JSON: {exc}")]) from exc
    root = os.path.dirname(os.path.abspath(manifest_file))
    manifest = manifest_from_dict(doc, seed=seed, test_fraction=test_fraction, root=root)
    if check_files and manifest.origin is None:
        for s in manifest.samples:
            path = os.path.join(root, s.uid)
            if not os.path.isfile(path):
                raise MissingFileError(f"sample file not found: {path}")
            try:
                read_image(path)
            except (UnsupportedFormatError, CorruptImageError) as exc:
                raise type(exc)(f"{s.uid}: {exc}") from exc
    return manifest


def manifest_to_dict(manifest):
    doc = {
        "classes": list(manifest.classes),
        "image_shape": list(manifest.image_shape),
        "mean": list(manifest.mean),
        "std": list(manifest.std),
        "seed": manifest.seed,
        "samples": [
            {"path": s.uid, "class": s.label, "site": s.site, "split": s.split}
            for s in manifest.samples
        ],
    }
    if manifest.origin is not None:
        doc["origin"] = manifest.origin
    return doc


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class Dataset:
    """A manifest materialized into preprocessed tensors, in manifest order."""

    manifest: DatasetManifest
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        n = len(self.manifest.samples)
        if self.x.shape != (n, *self.manifest.image_shape):
            raise ValidationError([("x", f"expected shape {(n, *self.manifest.image_shape)}, got {self.x.shape}")])
        if self.y.shape != (n,):
            raise ValidationError([("y", f"expected shape {(n,)}, got {self.y.shape}")])

    def subset(self, indices):
        idx = np.asarray(list(indices), dtype=np.int64)
        return self.x[idx], self.y[idx]

    def train_arrays(self):
        return self.subset(self.manifest.train_indices())

    def test_arrays(self):
        return self.subset(self.manifest.test_indices())


def load_dataset(manifest):
    """Materialize every sample of a manifest into a Dataset.

    File-backed manifests read and preprocess each referenced image; manifests
    with a synthetic origin regenerate tensors from the recorded parameters.
    """
    if manifest.origin is not None:
        kind = manifest.origin.get("kind")
        if kind != "synthetic":
            raise UnsupportedFormatError(f"unknown manifest origin kind {kind!r}")
        from .synthetic import regenerate_tensor

        frames = [regenerate_tensor(manifest, s.uid) for s in manifest.samples]
    else:
        if manifest.root is None:
            raise ValidationError([("root", "file-backed manifest has no root directory")])
        frames = []
        for s in manifest.samples:
            image = read_image(os.path.join(manifest.root, s.uid))
            frames.append(preprocess(image, manifest.image_shape, manifest.mean, manifest.std))
    x = np.stack(frames).astype(np.float32)
    y = np.array([s.label for s in manifest.samples], dtype=np.int64)
    return Dataset(manifest, x, y)
