"""Capacity-bounded episodic memory with per-batch quota insertion.

Every finished stream batch contributes ``min(floor(capacity / n), |batch|)``
uniformly sampled examples, so with a truthfully declared stream length the
buffer never needs eviction and all batches end up equally represented.
Replay draws are uniform without replacement; draws larger than the buffer
switch to with-replacement (the review pass is configured bigger than the
buffer in the reference setup).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import LoadError, MemoryEmptyError
from .streams import LabeledExample, StreamBatch, payload_nbytes

__all__ = ["ReplayMemory", "StoredExample"]

_SNAP_MAGIC = b"RMEM"
_SNAP_VERSION = 1
_KIND_EMPTY = 0
_KIND_VECTOR = 1
_KIND_RASTER = 2

# magic + u32 version + u64 capacity + u64 n_batches + u64 count + u32 kind + u32 ndim
_HEADER = struct.Struct("<4sIQQQII")
_FIXED_FIELDS = struct.Struct("<qqq")  # batch index, label, session


@dataclass(frozen=True)
class StoredExample:
    example: LabeledExample
    batch_index: int


class ReplayMemory:
    """Episodic buffer; single writer, read-only sampling between updates."""

    def __init__(self, capacity: int, n_batches: int) -> None:
        if capacity < 1:
            raise ValueError("memory capacity must be >= 1")
        if n_batches < 1:
            raise ValueError("declared stream length must be >= 1")
        self.capacity = capacity
        self.n_batches = n_batches
        self._slots: list[StoredExample] = []
        self.warnings: list[str] = []

    @property
    def quota(self) -> int:
        """Per-batch insertion allowance, floor(capacity / n)."""
        return self.capacity // self.n_batches

    def __len__(self) -> int:
        return len(self._slots)

    @property
    def slots(self) -> tuple[StoredExample, ...]:
        return tuple(self._slots)

    def batch_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for slot in self._slots:
            counts[slot.batch_index] = counts.get(slot.batch_index, 0) + 1
        return counts

    def update(self, batch: StreamBatch, rng: np.random.Generator) -> "ReplayMemory":
        """Insert the batch's quota sample; reservoir-evict only on misdeclared n."""
        k = min(self.quota, len(batch.examples))
        if k == 0:
            return self
        chosen = rng.choice(len(batch.examples), size=k, replace=False)
        overflowed = False
        for i in chosen:
            stored = StoredExample(example=batch.examples[int(i)], batch_index=batch.index)
            if len(self._slots) < self.capacity:
                self._slots.append(stored)
            else:
                # more batches arrived than declared; keep capacity by evicting
                # a uniformly random slot
                overflowed = True
                victim = int(rng.integers(0, self.capacity))
                self._slots[victim] = stored
        if overflowed:
            self.warnings.append(
                f"batch {batch.index}: quota insertion exceeded capacity "
                f"{self.capacity} (declared n={self.n_batches} too small); "
                f"fell back to reservoir eviction"
            )
        return self

    def sample(self, count: int, rng: np.random.Generator) -> list[LabeledExample]:
        """Uniform sample of exactly ``count``; with replacement iff count > size."""
        if not self._slots:
            raise MemoryEmptyError("cannot sample from an empty replay memory")
        if count < 0:
            raise ValueError("sample count must be >= 0")
        replace = count > len(self._slots)
        idx = rng.choice(len(self._slots), size=count, replace=replace)
        return [self._slots[int(i)].example for i in idx]

    # -- serialization and accounting ---------------------------------------

    def _payload_kind(self) -> tuple[int, tuple[int, ...]]:
        if not self._slots:
            return _KIND_EMPTY, ()
        first = self._slots[0].example
        if first.features is not None:
            dim = first.features.size
            for slot in self._slots:
                if slot.example.features is None or slot.example.features.size != dim:
                    raise ValueError("snapshot requires uniform vector payloads")
            return _KIND_VECTOR, (dim,)
        shape = first.image.shape[:2] if first.image is not None else first.image_shape
        for slot in self._slots:
            ex = slot.example
            got = ex.image.shape[:2] if ex.image is not None else ex.image_shape
            if ex.features is not None or got != shape:
                raise ValueError("snapshot requires uniform raster payloads")
        return _KIND_RASTER, (shape[0], shape[1], 3)

    def record_nbytes(self) -> int:
        """Fixed-width record size: 24 bytes of ids plus the payload."""
        if not self._slots:
            return _FIXED_FIELDS.size
        return _FIXED_FIELDS.size + payload_nbytes(self._slots[0].example)

    def footprint(self) -> int:
        """Deterministic byte count, equal to ``len(self.to_snapshot())``."""
        _, dims = self._payload_kind()
        return _HEADER.size + 8 * len(dims) + len(self._slots) * self.record_nbytes()

    def to_snapshot(self) -> bytes:
        """Flat binary snapshot: header, dims, then fixed-width records."""
        kind, dims = self._payload_kind()
        parts = [
            _HEADER.pack(_SNAP_MAGIC, _SNAP_VERSION, self.capacity, self.n_batches,
                         len(self._slots), kind, len(dims)),
            struct.pack(f"<{len(dims)}q", *dims) if dims else b"",
        ]
        for slot in self._slots:
            ex = slot.example
            parts.append(_FIXED_FIELDS.pack(slot.batch_index, ex.label, ex.session))
            if kind == _KIND_VECTOR:
                parts.append(np.ascontiguousarray(ex.features, dtype=np.float64).tobytes())
            else:
                parts.append(np.ascontiguousarray(ex.raster(), dtype=np.uint8).tobytes())
        return b"".join(parts)

    @classmethod
    def from_snapshot(cls, data: bytes) -> "ReplayMemory":
        try:
            magic, version, capacity, n_batches, count, kind, ndim = _HEADER.unpack_from(data, 0)
        except struct.error as exc:
            raise LoadError(f"truncated memory snapshot: {exc}") from exc
        if magic != _SNAP_MAGIC or version != _SNAP_VERSION:
            raise LoadError("bad memory snapshot magic/version")
        offset = _HEADER.size
        dims = struct.unpack_from(f"<{ndim}q", data, offset)
        offset += 8 * ndim
        mem = cls(capacity=capacity, n_batches=n_batches)
        payload = int(np.prod(dims)) if dims else 0
        for _ in range(count):
            batch_index, label, session = _FIXED_FIELDS.unpack_from(data, offset)
            offset += _FIXED_FIELDS.size
            if kind == _KIND_VECTOR:
                feats = np.frombuffer(data, dtype=np.float64, count=payload, offset=offset)
                offset += 8 * payload
                ex = LabeledExample(label=label, session=session, features=feats.copy())
            elif kind == _KIND_RASTER:
                img = np.frombuffer(data, dtype=np.uint8, count=payload, offset=offset)
                offset += payload
                ex = LabeledExample(label=label, session=session,
                                    image=img.reshape(dims).copy())
            else:
                raise LoadError("snapshot declares examples but an empty payload kind")
            mem._slots.append(StoredExample(example=ex, batch_index=batch_index))
        return mem
