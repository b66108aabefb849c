"""Digital-twin record registry.

Every classified sample becomes an append-only JSONL record tying the sample
reference to the model version that judged it, the predicted class, and the
full probability vector. Records are the machine-readable state a twin
renderer or dashboard would consume, and re-tallying them for one model
version reproduces that version's confusion matrix exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import ValidationError
from .metrics import ConfusionMatrix, confusion, predict

PROB_SUM_TOL = 1e-6


def model_version(round_index, params):
    """Version string naming a persisted checkpoint: round plus schema hash."""
    return f"round-{round_index:03d}+{params.schema_hash[:16]}"


def utc_now():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class TwinRecord:
    record_id: int
    sample_uid: str
    predicted_class: str
    predicted_index: int
    probabilities: tuple
    site: str
    version: str
    timestamp: str

    def __post_init__(self):
        total = float(sum(self.probabilities))
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError([("probabilities", f"sum {total} is not 1 within {PROB_SUM_TOL}")])
        argmax = max(range(len(self.probabilities)), key=lambda i: self.probabilities[i])
        if self.predicted_index != argmax:
            raise ValidationError(
                [("predicted_index", f"{self.predicted_index} is not the argmax ({argmax}) of the vector")]
            )

    def to_dict(self):
        return {
            "id": self.record_id,
            "uid": self.sample_uid,
            "class": self.predicted_class,
            "class_index": self.predicted_index,
            "probs": list(self.probabilities),
            "site": self.site,
            "version": self.version,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            record_id=int(doc["id"]),
            sample_uid=str(doc["uid"]),
            predicted_class=str(doc["class"]),
            predicted_index=int(doc["class_index"]),
            probabilities=tuple(float(v) for v in doc["probs"]),
            site=str(doc["site"]),
            version=str(doc["version"]),
            timestamp=str(doc["timestamp"]),
        )


class TwinStore:
    """Append-only record log with in-memory class and site indexes.

    One store owns one JSONL file; opening re-reads it, so the store round
    trips through its file format. Writes go through a single owner.
    """

    def __init__(self, path, classes, sites, clock=utc_now):
        self.path = path
        self.classes = tuple(classes)
        self.sites = tuple(sites)
        self._clock = clock
        self._records = []
        self._seen = set()
        if path is not None and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        record = TwinRecord.from_dict(json.loads(line))
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ValidationError([(f"{path}:{line_no}", f"bad twin record: {exc}")]) from exc
                    self._append_loaded(record)

    def _append_loaded(self, record):
        if self._records and record.record_id <= self._records[-1].record_id:
            raise ValidationError(
                [("id", f"record ids must be strictly increasing, got {record.record_id}")]
            )
        self._records.append(record)
        self._seen.add((record.sample_uid, record.version))

    def __len__(self):
        return len(self._records)

    @property
    def records(self):
        return tuple(self._records)

    def register(self, network, params, version, uid, site, tensor):
        """Classify one preprocessed sample and persist the outcome."""
        if site not in self.sites:
            raise ValidationError([("site", f"unknown site {site!r}, known: {sorted(self.sites)}")])
        if (uid, version) in self._seen:
            raise ValidationError(
                [("uid", f"sample {uid!r} already registered under model version {version!r}")]
            )
        preds, probs = predict(network, params, np.asarray(tensor)[None])
        index = int(preds[0])
        record = TwinRecord(
            record_id=self._records[-1].record_id + 1 if self._records else 0,
            sample_uid=uid,
            predicted_class=self.classes[index],
            predicted_index=index,
            probabilities=tuple(float(v) for v in probs[0]),
            site=site,
            version=version,
            timestamp=self._clock(),
        )
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        self._records.append(record)
        self._seen.add((uid, version))
        return record

    def query(self, class_name=None, site=None, version=None):
        """Matching records in insertion order; filters are ANDed."""
        problems = []
        if class_name is not None and class_name not in self.classes:
            problems.append(("class", f"unknown class {class_name!r}"))
        if site is not None and site not in self.sites:
            problems.append(("site", f"unknown site {site!r}, known: {sorted(self.sites)}"))
        if problems:
            raise ValidationError(problems)
        out = []
        for record in self._records:
            if class_name is not None and record.predicted_class != class_name:
                continue
            if site is not None and record.site != site:
                continue
            if version is not None and record.version != version:
                continue
            out.append(record)
        return out

    def retally(self, labels_by_uid, version):
        """Confusion matrix rebuilt from this version's records.

        ``labels_by_uid`` supplies the true class index per sample reference
        (the registry stores predictions, the catalog knows the truth).
        """
        records = self.query(version=version)
        missing = sorted({r.sample_uid for r in records} - set(labels_by_uid))
        if missing:
            raise ValidationError([("labels_by_uid", f"no true label for {missing[:5]} (+{max(0, len(missing) - 5)} more)")])
        true = [labels_by_uid[r.sample_uid] for r in records]
        pred = [r.predicted_index for r in records]
        return confusion(true, pred, len(self.classes))
