"""Named model parameters and their binary checkpoint format.

A parameter set is an ordered list of ``(name, array)`` pairs. Two sets are
aggregation-compatible exactly when their schema hashes (a digest of the
ordered names and shapes) are equal.

Checkpoint layout (all little-endian):

    magic "BFCK" | u16 format version | u32 entry count |
    per entry: u16 name length | name UTF-8 | u8 rank | u32 per dim |
               f32 per value (row-major)

The schema hash is SHA-256 over the concatenated per-entry preamble bytes
(name length, name, rank, dims), i.e. everything except the values.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from ..errors import CheckpointFormatError, NonFiniteError, SchemaMismatchError, ValidationError

CHECKPOINT_MAGIC = b"BFCK"
CHECKPOINT_VERSION = 1

_ALLOWED_DTYPES = (np.float32, np.float64)


class ModelParameters:
    """Ordered, named collection of parameter tensors.

    Arrays are float32 by default; float64 is accepted so numerical tests can
    run the whole engine in double precision. Checkpoints always store
    float32 values.
    """

    def __init__(self, entries):
        if isinstance(entries, dict):
            entries = list(entries.items())
        seen = set()
        cleaned = []
        for name, arr in entries:
            if not isinstance(name, str) or not name:
                raise ValidationError([("entries", f"bad parameter name {name!r}")])
            if name in seen:
                raise ValidationError([("entries", f"duplicate parameter name {name!r}")])
            seen.add(name)
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _ALLOWED_DTYPES:
                arr = arr.astype(np.float32)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"parameter {name!r} contains non-finite values")
            cleaned.append((name, arr))
        self._entries = cleaned
        self._schema_hash = None

    def names(self):
        return [name for name, _ in self._entries]

    def items(self):
        return list(self._entries)

    def __getitem__(self, name):
        for n, arr in self._entries:
            if n == name:
                return arr
        raise KeyError(name)

    def __contains__(self, name):
        return any(n == name for n, _ in self._entries)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def schema_hash(self):
        if self._schema_hash is None:
            self._schema_hash = hashlib.sha256(self._schema_preamble()).hexdigest()
        return self._schema_hash

    def _schema_preamble(self):
        parts = []
        for name, arr in self._entries:
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<B", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        return b"".join(parts)

    def num_values(self):
        return sum(arr.size for _, arr in self._entries)

    def copy(self):
        return ModelParameters([(n, a.copy()) for n, a in self._entries])

    def astype(self, dtype):
        return ModelParameters([(n, a.astype(dtype)) for n, a in self._entries])

    def bit_equal(self, other):
        """Exact float32 equality, name for name."""
        if self.names() != other.names():
            return False
        for (_, a), (_, b) in zip(self._entries, other._entries):
            if a.shape != b.shape:
                return False
            if not np.array_equal(a.astype(np.float32), b.astype(np.float32)):
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, ModelParameters):
            return NotImplemented
        return self.bit_equal(other)

    def __repr__(self):
        return f"ModelParameters({len(self._entries)} tensors, {self.num_values()} values)"

    # --- checkpoint serialization -------------------------------------

    def to_bytes(self):
        out = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(self._entries))]
        for name, arr in self._entries:
            raw = name.encode("utf-8")
            out.append(struct.pack("<H", len(raw)))
            out.append(raw)
            out.append(struct.pack("<B", arr.ndim))
            out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.append(arr.astype("<f4").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data, offset=0, consume_all=True):
        """Parse a checkpoint. Returns the parameters and the end offset."""
        view = memoryview(data)
        pos = offset
        try:
            if bytes(view[pos:pos + 4]) != CHECKPOINT_MAGIC:
                raise CheckpointFormatError("bad checkpoint magic")
            pos += 4
            if len(view) - pos < 6:
                raise CheckpointFormatError("truncated checkpoint header")
            version, count = struct.unpack_from("<HI", view, pos)
            pos += 6
            if version != CHECKPOINT_VERSION:
                raise CheckpointFormatError(f"unsupported checkpoint version {version}")
            entries = []
            for _ in range(count):
                if len(view) - pos < 2:
                    raise CheckpointFormatError("truncated entry name length")
                (name_len,) = struct.unpack_from("<H", view, pos)
                pos += 2
                if len(view) - pos < name_len + 1:
                    raise CheckpointFormatError("truncated entry name")
                name = bytes(view[pos:pos + name_len]).decode("utf-8")
                pos += name_len
                (rank,) = struct.unpack_from("<B", view, pos)
                pos += 1
                if len(view) - pos < 4 * rank:
                    raise CheckpointFormatError("truncated entry dims")
                dims = struct.unpack_from(f"<{rank}I", view, pos)
                pos += 4 * rank
                n_values = 1
                for d in dims:
                    n_values *= d
                nbytes = 4 * n_values
                if len(view) - pos < nbytes:
                    raise CheckpointFormatError("truncated entry values")
                arr = np.frombuffer(view[pos:pos + nbytes], dtype="<f4").reshape(dims).copy()
                pos += nbytes
                entries.append((name, arr))
        except (UnicodeDecodeError, struct.error) as exc:
            raise CheckpointFormatError(str(exc)) from exc
        if consume_all and pos != len(view):
            raise CheckpointFormatError(f"{len(view) - pos} trailing bytes after checkpoint")
        try:
            params = cls(entries)
        except (ValidationError, NonFiniteError) as exc:
            raise CheckpointFormatError(str(exc)) from exc
        return params, pos

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            params, _ = cls.from_bytes(fh.read())
        return params


def check_same_schema(a: ModelParameters, b: ModelParameters, context=""):
    if a.schema_hash != b.schema_hash:
        prefix = f"{context}: " if context else ""
        raise SchemaMismatchError(
            f"{prefix}parameter schema mismatch ({a.schema_hash[:12]} vs {b.schema_hash[:12]})"
        )
