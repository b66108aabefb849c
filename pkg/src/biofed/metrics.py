"""Confusion-matrix evaluation and run comparison.

Convention: rows are the true class, columns the predicted class. Accuracy is
trace over total, computed in integer arithmetic with a single final division.
Zero denominators never raise and never produce NaN: the affected score is
reported as 0.0 and the substitution is listed in the report's flags.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyShardError, LabelOutOfRangeError, ValidationError

DEFAULT_CLOSE_THRESHOLD = 0.05
EVAL_BATCH = 64


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K count matrix, rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError([("counts", f"must be square, got shape {arr.shape}")])
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError([("counts", f"must be integer, got dtype {arr.dtype}")])
        if (arr < 0).any():
            raise ValidationError([("counts", "entries must be nonnegative")])
        object.__setattr__(self, "counts", arr.astype(np.int64, copy=True))
        self.counts.setflags(write=False)

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def trace(self):
        return int(np.trace(self.counts))

    def __add__(self, other):
        if self.num_classes != other.num_classes:
            raise ValidationError([("counts", f"cannot add {self.num_classes}x matrix to {other.num_classes}x")])
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def confusion(true_labels, predicted_labels, num_classes):
    """Tally a confusion matrix. Empty inputs give the all-zero matrix."""
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValidationError([("labels", f"length mismatch: {t.shape[0]} true vs {p.shape[0]} predicted")])
    if num_classes < 1:
        raise ValidationError([("num_classes", f"must be positive, got {num_classes}")])
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            bad = arr[(arr < 0) | (arr >= num_classes)][0]
            raise LabelOutOfRangeError(f"{name} label {bad} outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class MetricsReport:
    """Derived scores plus the flags explaining any zero substitutions."""

    accuracy: float
    precision: tuple
    recall: tuple
    f1: tuple
    support: tuple
    macro_precision: float
    macro_recall: float
    macro_f1: float
    flags: tuple
    empty: bool
    test_set_hash: str = ""
    mean_loss: "float | None" = None

    @property
    def num_classes(self):
        return len(self.precision)


def derive_metrics(cm, exclude_zero_support=False, test_set_hash="", mean_loss=None):
    """Per-class and macro precision/recall/F1 from a confusion matrix.

    Zero denominators substitute 0.0 and are listed in flags. Macro averages
    include those zeros unless ``exclude_zero_support`` drops classes with no
    true samples from the averaging.
    """
    counts = cm.counts
    k = cm.num_classes
    total = cm.total
    flags = []
    if total == 0:
        zeros = (0.0,) * k
        return MetricsReport(
            accuracy=0.0, precision=zeros, recall=zeros, f1=zeros, support=(0,) * k,
            macro_precision=0.0, macro_recall=0.0, macro_f1=0.0,
            flags=("empty-evaluation",), empty=True,
            test_set_hash=test_set_hash, mean_loss=mean_loss,
        )
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision, recall, f1 = [], [], []
    for c in range(k):
        if col[c] == 0:
            precision.append(0.0)
            flags.append(f"precision[{c}]=0 (no predictions)")
        else:
            precision.append(int(tp[c]) / int(col[c]))
        if row[c] == 0:
            recall.append(0.0)
            flags.append(f"recall[{c}]=0 (no support)")
        else:
            recall.append(int(tp[c]) / int(row[c]))
        if precision[c] + recall[c] == 0.0:
            f1.append(0.0)
            flags.append(f"f1[{c}]=0 (precision and recall both 0)")
        else:
            f1.append(2.0 * precision[c] * recall[c] / (precision[c] + recall[c]))
    if exclude_zero_support:
        kept = [c for c in range(k) if row[c] > 0]
    else:
        kept = list(range(k))
    macro = lambda vals: sum(vals[c] for c in kept) / len(kept) if kept else 0.0
    return MetricsReport(
        accuracy=cm.trace / total,
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        support=tuple(int(v) for v in row),
        macro_precision=macro(precision),
        macro_recall=macro(recall),
        macro_f1=macro(f1),
        flags=tuple(flags),
        empty=False,
        test_set_hash=test_set_hash,
        mean_loss=mean_loss,
    )


def test_set_fingerprint(x, y):
    """Identity hash of an evaluation set, used to gate run comparisons."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
    h = hashlib.sha256()
    h.update(repr((x.shape, y.shape)).encode())
    h.update(x.tobytes())
    h.update(y.tobytes())
    return h.hexdigest()[:16]


def predict(network, params, x, batch_size=EVAL_BATCH):
    """Batched inference: argmax predictions (lowest index wins ties) and the
    softmax probability vectors, in input order."""
    n = x.shape[0]
    if n == 0:
        raise EmptyShardError("inference requested on an empty sample set")
    preds = np.empty(n, dtype=np.int64)
    probs = np.empty((n, network.num_classes), dtype=np.float32)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        logits = network.forward(params, x[start:stop]).astype(np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        probs[start:stop] = np.exp(shifted - log_z[:, None]).astype(np.float32)
        preds[start:stop] = np.argmax(logits, axis=1)
    return preds, probs


def evaluate_model(network, params, x, y, batch_size=EVAL_BATCH):
    """Evaluate on a fixed sample order: confusion matrix plus mean loss."""
    n = x.shape[0]
    if n == 0:
        raise EmptyShardError("evaluation requested on an empty sample set")
    y = np.asarray(y, dtype=np.int64)
    preds = np.empty(n, dtype=np.int64)
    probs = np.empty((n, network.num_classes), dtype=np.float32)
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        logits = network.forward(params, x[start:stop]).astype(np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        batch_labels = y[start:stop]
        loss_sum += float((log_z - shifted[np.arange(stop - start), batch_labels]).sum())
        probs[start:stop] = np.exp(shifted - log_z[:, None]).astype(np.float32)
        preds[start:stop] = np.argmax(logits, axis=1)
    cm = confusion(y, preds, network.num_classes)
    return cm, loss_sum / n, preds, probs


@dataclass(frozen=True)
class ComparisonReport:
    """Federated-minus-centralized deltas and the closeness verdict."""

    deltas: dict
    threshold: float
    close: bool
    centralized_accuracy: float
    federated_accuracy: float


def compare_runs(centralized, federated, threshold=DEFAULT_CLOSE_THRESHOLD):
    problems = []
    if centralized.num_classes != federated.num_classes:
        problems.append(("num_classes", f"{centralized.num_classes} vs {federated.num_classes}"))
    if centralized.test_set_hash != federated.test_set_hash:
        problems.append(("test_set_hash", f"{centralized.test_set_hash!r} vs {federated.test_set_hash!r}"))
    if problems:
        raise ValidationError(problems)
    deltas = {
        "accuracy": federated.accuracy - centralized.accuracy,
        "macro_precision": federated.macro_precision - centralized.macro_precision,
        "macro_recall": federated.macro_recall - centralized.macro_recall,
        "macro_f1": federated.macro_f1 - centralized.macro_f1,
    }
    return ComparisonReport(
        deltas=deltas,
        threshold=threshold,
        close=abs(deltas["accuracy"]) <= threshold,
        centralized_accuracy=centralized.accuracy,
        federated_accuracy=federated.accuracy,
    )


def confusion_to_csv(cm, classes):
    if len(classes) != cm.num_classes:
        raise ValidationError([("classes", f"need {cm.num_classes} names, got {len(classes)}")])
    lines = [",".join(classes)]
    for row in cm.counts:
        lines.append(",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def confusion_from_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    classes = lines[0].split(",")
    counts = [[int(v) for v in ln.split(",")] for ln in lines[1:]]
    return ConfusionMatrix(np.array(counts, dtype=np.int64)), classes


def _cell_color(value, peak):
    frac = 0.0 if peak == 0 else value / peak
    # white at 0 up to a saturated blue at the matrix maximum
    r = round(255 + (31 - 255) * frac)
    g = round(255 + (119 - 255) * frac)
    b = round(255 + (180 - 255) * frac)
    return f"#{r:02x}{g:02x}{b:02x}"


def confusion_to_svg(cm, classes, title=""):
    """Static grid heatmap with per-cell counts, rows true, columns predicted."""
    if len(classes) != cm.num_classes:
        raise ValidationError([("classes", f"need {cm.num_classes} names, got {len(classes)}")])
    k = cm.num_classes
    cell = 30
    margin_left = 10 + 7 * max((len(c) for c in classes), default=1)
    margin_top = 34
    width = margin_left + k * cell + 10
    height = margin_top + k * cell + 10 + 7 * max((len(c) for c in classes), default=1)
    peak = int(cm.counts.max(initial=0))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{margin_left}" y="14" font-size="12">{title}</text>')
    parts.append(f'<text x="{margin_left}" y="{margin_top - 8}" font-size="9">rows: true, columns: predicted</text>')
    for i in range(k):
        y = margin_top + i * cell
        parts.append(
            f'<text x="{margin_left - 6}" y="{y + cell / 2 + 3:g}" text-anchor="end">{classes[i]}</text>'
        )
        for j in range(k):
            x = margin_left + j * cell
            v = int(cm.counts[i, j])
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_cell_color(v, peak)}" stroke="#888" stroke-width="0.5"/>'
            )
            text_fill = "#000" if peak == 0 or v / peak < 0.6 else "#fff"
            parts.append(
                f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 3:g}" text-anchor="middle" fill="{text_fill}">{v}</text>'
            )
    for j in range(k):
        x = margin_left + j * cell + cell / 2
        y = margin_top + k * cell + 8
        parts.append(
            f'<text x="{x:g}" y="{y:g}" text-anchor="start" transform="rotate(90 {x:g} {y:g})">{classes[j]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_to_dict(report, cm=None, classes=None):
    doc = {
        "accuracy": report.accuracy,
        "precision": list(report.precision),
        "recall": list(report.recall),
        "f1": list(report.f1),
        "support": list(report.support),
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "flags": list(report.flags),
        "empty": report.empty,
        "test_set_hash": report.test_set_hash,
        "mean_loss": report.mean_loss,
    }
    if cm is not None:
        doc["confusion"] = [[int(v) for v in row] for row in cm.counts]
    if classes is not None:
        doc["classes"] = list(classes)
    return doc


def report_from_dict(doc):
    report = MetricsReport(
        accuracy=float(doc["accuracy"]),
        precision=tuple(float(v) for v in doc["precision"]),
        recall=tuple(float(v) for v in doc["recall"]),
        f1=tuple(float(v) for v in doc["f1"]),
        support=tuple(int(v) for v in doc["support"]),
        macro_precision=float(doc["macro_precision"]),
        macro_recall=float(doc["macro_recall"]),
        macro_f1=float(doc["macro_f1"]),
        flags=tuple(doc.get("flags", ())),
        empty=bool(doc.get("empty", False)),
        test_set_hash=doc.get("test_set_hash", ""),
        mean_loss=doc.get("mean_loss"),
    )
    cm = None
    if "confusion" in doc:
        cm = ConfusionMatrix(np.array(doc["confusion"], dtype=np.int64))
    return report, cm, doc.get("classes")


def comparison_to_dict(cmp):
    return {
        "deltas": dict(cmp.deltas),
        "threshold": cmp.threshold,
        "close": cmp.close,
        "centralized_accuracy": cmp.centralized_accuracy,
        "federated_accuracy": cmp.federated_accuracy,
    }


def dump_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
