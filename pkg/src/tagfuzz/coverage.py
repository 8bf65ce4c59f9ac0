"""Context-sensitive edge coverage with AFL hit-count buckets."""

from __future__ import annotations

import hashlib
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .target import MAP_SIZE, EdgeEvent

# AFL classes: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+
_BUCKET_TABLE = bytes(
    0 if c == 0 else
    1 if c == 1 else
    2 if c == 2 else
    4 if c == 3 else
    8 if c <= 7 else
    16 if c <= 15 else
    32 if c <= 31 else
    64 if c <= 127 else
    128
    for c in range(256)
)

# smallest raw count of each class, handy for tests
BUCKET_REPRESENTATIVES = {1: 1, 2: 2, 4: 3, 8: 4, 16: 8, 32: 16, 64: 32, 128: 128}

SURGICAL = "surgical"
STRUCTURE = "structure"


def bucket(count: int) -> int:
    return _BUCKET_TABLE[count] if count < 256 else 128


def bucketize(counts: Mapping[int, int]) -> dict[int, int]:
    table = _BUCKET_TABLE
    return {i: (table[c] if c < 256 else 128) for i, c in counts.items() if c}


def record(edges: Iterable[EdgeEvent], counts: dict[int, int] | None = None) -> dict[int, int]:
    """Fold an edge stream into raw per-index hit counts (no bucketing).

    Colliding indices share one counter.
    """
    counts = {} if counts is None else counts
    for e in edges:
        idx = e.index
        counts[idx] = counts.get(idx, 0) + 1
    return counts


def path_hash(counts: Mapping[int, int]) -> int:
    """64-bit footprint of the bucketized map."""
    h = hashlib.blake2b(digest_size=8)
    table = _BUCKET_TABLE
    for i in sorted(counts):
        c = counts[i]
        if c:
            h.update(i.to_bytes(4, "little"))
            h.update(bytes((table[c] if c < 256 else 128,)))
    return int.from_bytes(h.digest(), "little")


@dataclass
class Novelty:
    new_edges: int = 0
    new_buckets: int = 0
    new_maxima: int = 0

    def __bool__(self) -> bool:
        return bool(self.new_edges or self.new_buckets or self.new_maxima)

    def __str__(self) -> str:
        parts = []
        if self.new_edges:
            parts.append(f"{self.new_edges} new edge(s)")
        if self.new_buckets:
            parts.append(f"{self.new_buckets} new bucket(s)")
        if self.new_maxima:
            parts.append(f"{self.new_maxima} new loop maxima")
        return ", ".join(parts) or "nothing new"


class CoverageMap:
    """Global novelty state: seen-bucket bitmask per index, plus the
    per-surgical-stage maxima used for loop bucketization."""

    def __init__(self, size: int = MAP_SIZE):
        self.size = size
        self.virgin = np.zeros(size, dtype=np.uint8)
        self.hits = np.zeros(size, dtype=np.uint64)
        self.stage_max: dict[int, int] = {}

    def record(self, counts: Mapping[int, int]) -> None:
        """Accumulate raw counts of one execution into the lifetime totals."""
        if counts:
            idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
            val = np.fromiter(counts.values(), dtype=np.uint64, count=len(counts))
            np.add.at(self.hits, idx, val)

    def begin_stage(self, baseline: Mapping[int, int] | None = None) -> None:
        """Reset loop-bucketization maxima at surgical-stage entry."""
        self.stage_max = dict(baseline) if baseline else {}

    def is_interesting(self, counts: Mapping[int, int], stage: str = STRUCTURE) -> Novelty:
        nov = Novelty()
        virgin = self.virgin
        table = _BUCKET_TABLE
        smax = self.stage_max
        surgical = stage == SURGICAL
        for i, c in counts.items():
            if not c:
                continue
            b = table[c] if c < 256 else 128
            seen = int(virgin[i])
            if not seen:
                nov.new_edges += 1
                virgin[i] = b
            elif not seen & b:
                nov.new_buckets += 1
                virgin[i] = seen | b
            if surgical and c > smax.get(i, 0):
                if seen:
                    nov.new_maxima += 1
                smax[i] = c
        return nov

    def would_be_interesting(self, counts: Mapping[int, int], stage: str = STRUCTURE) -> bool:
        table = _BUCKET_TABLE
        for i, c in counts.items():
            if not c:
                continue
            b = table[c] if c < 256 else 128
            if not int(self.virgin[i]) & b:
                return True
            if stage == SURGICAL and c > self.stage_max.get(i, 0):
                return True
        return False

    @property
    def edges_seen(self) -> int:
        return int(np.count_nonzero(self.virgin))

    @property
    def buckets_seen(self) -> int:
        return int(np.unpackbits(self.virgin).sum())
