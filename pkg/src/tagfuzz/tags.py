"""Per-byte tags: which comparison best characterizes each input byte."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cmplog import ComparisonTable, sites_by_exec_order
from .deps import DepsMap
from .i2s import is_checksum_candidate

REASSIGN_MIN_DEPS = 4

_HEADER = struct.Struct("<4sHBxI")
_MAGIC = b"TFTG"
_VERSION = 1
_RECORD = struct.Struct("<HIHHBIx")

F_OP2 = 1
F_I2S = 2
F_CHECKSUM = 4


@dataclass(frozen=True)
class Tag:
    """``ts`` is the site's first-seen rank plus one, so 0 only ever means untagged."""

    id: int = 0
    ts: int = 0
    parent: int = 0
    depends_on: int = 0
    operand: int = 0
    i2s: bool = False
    checksum: bool = False
    num_deps: int = 0

    @property
    def flags(self) -> int:
        return (F_OP2 if self.operand else 0) | (F_I2S if self.i2s else 0) | (F_CHECKSUM if self.checksum else 0)

    def same(self, other: "Tag") -> bool:
        """Field identity: same site and same checksum role."""
        return self.id == other.id and self.checksum == other.checksum


UNTAGGED = Tag()


class TagArray(list):
    """One :class:`Tag` per input byte, plus sweep state for parent links."""

    def __init__(self, tags=(), derived: bool = False):
        super().__init__(tags)
        self.derived = derived
        self.last_setter = 0
        self._setter_before = {}

    @classmethod
    def empty(cls, n: int) -> "TagArray":
        return cls([UNTAGGED] * n)

    def copy(self, derived: bool | None = None) -> "TagArray":
        return TagArray(self, self.derived if derived is None else derived)

    @property
    def tagged(self) -> int:
        return sum(1 for t in self if t.id)

    def ids(self) -> list[int]:
        return sorted({t.id for t in self if t.id})

    def parent_for(self, site: int) -> int:
        """Site of the latest assignment made before ``site`` started assigning."""
        if site not in self._setter_before:
            self._setter_before[site] = self.last_setter
        return self._setter_before[site]


def _valid_checksum(ci, addr: int) -> bool:
    return ci is not None and ci.is_valid(addr)


def _checksum_image(ct, deps, r, ci, s) -> np.ndarray | None:
    """Bytes holding the expected value of checksum site ``s`` across its instances."""
    rec = ct[s]
    if not _valid_checksum(ci, rec.addr):
        return None
    mask = np.zeros(deps.length, dtype=bool)
    for j in range(len(rec.instances)):
        entry = r.get((s, j), (None, None))
        x = is_checksum_candidate(entry, deps, s, j)
        if x is not None:
            mask[entry[x].offset:entry[x].offset + entry[x].width] = True
    return mask


def _depends_on(b: int, own_site: int, order, deps: DepsMap) -> int:
    for g in order or ():
        if g.site == own_site:
            continue
        if deps[(g.site, g.j, 1 - g.operand)][b]:
            return g.site
    return 0


def place_tags(tags: TagArray, deps: DepsMap, s: int, ct: ComparisonTable, ci, r: dict,
               order, data: bytes) -> TagArray:
    """Assign tags for the bytes operands of site ``s`` depend on.

    Call once per site in first-seen order on a zeroed :class:`TagArray`.
    """
    rec = ct[s]
    ck_image = _checksum_image(ct, deps, r, ci, s)
    unions = [deps.union(s, op, len(rec.instances)) for op in (0, 1)]
    counts = [int(u.sum()) for u in unions]
    if not any(counts):
        return tags
    i2s_mask = [np.zeros(deps.length, dtype=bool) for _ in (0, 1)]
    for j in range(len(rec.instances)):
        for op in (0, 1):
            hit = r.get((s, j), (None, None))[op]
            if hit is not None:
                i2s_mask[op][hit.offset:hit.offset + hit.width] = True
    parent = tags.parent_for(s)
    set_any = False
    for b in range(len(data)):
        for op in (0, 1):
            if not unions[op][b]:
                continue
            n = counts[op]
            cur = tags[b]
            n_prev = cur.num_deps
            reassign = not cur.checksum and n_prev > REASSIGN_MIN_DEPS and n < n_prev
            is_ck = ck_image is not None and bool(ck_image[b])
            if cur.id == s and not is_ck:
                # both operands read b: keep the more specific one
                reassign = n < n_prev
            if cur.id == 0 or is_ck or reassign:
                tags[b] = Tag(
                    id=s,
                    ts=rec.ts + 1,
                    parent=parent,
                    depends_on=_depends_on(b, s, order, deps),
                    operand=op,
                    i2s=bool(i2s_mask[op][b]),
                    checksum=is_ck,
                    num_deps=n,
                )
                set_any = True
    if set_any:
        tags.last_setter = s
    return tags


def place_all_tags(deps: DepsMap, ct: ComparisonTable, ci, r: dict, order, data: bytes) -> TagArray:
    tags = TagArray.empty(len(data))
    for s in sites_by_exec_order(ct):
        place_tags(tags, deps, s, ct, ci, r, order, data)
    return tags


def clear_checksum_flags(tags: TagArray, sites) -> TagArray:
    out = TagArray((replace(t, checksum=False) if t.checksum and t.id in sites else t
                    for t in tags), tags.derived)
    out.last_setter = tags.last_setter
    return out


# -- derived tags ------------------------------------------------------------------

def derive_tags(source: TagArray | None, kind: str, *, length: int | None = None,
                start: int = 0, end: int = -1, donor: list[Tag] | None = None) -> TagArray | None:
    """Tags for a child built from ``source`` by a structural edit.

    kinds: ``operands`` (local rewrite), ``add`` (``donor`` inserted at
    ``start``), ``splice`` (``donor`` replaces ``start..end``), ``delete``
    (``start..end`` removed). Anything else yields None.
    """
    if source is None:
        return None
    src = list(source)
    if kind == "operands":
        out = src
    elif kind == "add":
        out = src[:start] + list(donor) + src[start:]
    elif kind == "splice":
        out = src[:start] + list(donor) + src[end + 1:]
    elif kind == "delete":
        out = src[:start] + src[end + 1:]
    else:
        return None
    if length is not None and len(out) != length:
        raise ValueError(f"derived tags cover {len(out)} bytes, input has {length}")
    return TagArray(out, derived=True)


# -- sidecar ------------------------------------------------------------------------

def dumps(tags: TagArray) -> bytes:
    out = [_HEADER.pack(_MAGIC, _VERSION, int(tags.derived), len(tags))]
    for t in tags:
        out.append(_RECORD.pack(t.id, t.ts, t.parent, t.depends_on, t.flags, t.num_deps))
    return b"".join(out)


def loads(blob: bytes) -> TagArray:
    magic, version, derived, n = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not a tag sidecar (bad magic or version)")
    if len(blob) != _HEADER.size + n * _RECORD.size:
        raise ValueError("truncated tag sidecar")
    tags = []
    for k in range(n):
        tid, ts, parent, dep, flags, nd = _RECORD.unpack_from(blob, _HEADER.size + k * _RECORD.size)
        tags.append(Tag(tid, ts, parent, dep, flags & F_OP2, bool(flags & F_I2S),
                        bool(flags & F_CHECKSUM), nd))
    return TagArray(tags, derived=bool(derived))


def save(path: str | Path, tags: TagArray) -> None:
    Path(path).write_bytes(dumps(tags))


def load(path: str | Path) -> TagArray:
    return loads(Path(path).read_bytes())

