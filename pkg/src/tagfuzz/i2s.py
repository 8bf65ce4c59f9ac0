"""Input-to-state detection, checksum bookkeeping, operand fuzzing and input repair."""

from __future__ import annotations

import enum
import logging
import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .cmplog import ComparisonTable, Instance, build_ct, sites_by_exec_order
from .coverage import SURGICAL, path_hash
from .deps import DepsMap
from .executor import Executor
from .target import ExecutionTrace, Kind, Mode

log = logging.getLogger(__name__)


# -- encodings -------------------------------------------------------------------

@dataclass(frozen=True)
class Encoding:
    """How an operand value is laid out in the input.

    ``width`` is the number of input bytes, ``big`` the byte order of those
    bytes. ``kind`` is one of :data:`ENCODING_KINDS`.
    """

    kind: str
    width: int
    big: bool = False

    def __str__(self) -> str:
        order = "be" if self.big else "le"
        return f"{self.kind}/{self.width}{order}"


ENCODING_KINDS = ("identity", "byte-swap", "zero-extend", "sign-extend", "+1", "-1",
                  "ascii-decode", "ascii-encode")


def _to_int(op: bytes) -> int:
    return int.from_bytes(op, "little")


def _pack(v: int, width: int, big: bool) -> bytes:
    return (v & ((1 << (8 * width)) - 1)).to_bytes(width, "big" if big else "little")


def candidate_encodings(size: int, kind: Kind = Kind.COMPARE) -> list[Encoding]:
    """Encodings to try for an operand, in detection precedence."""
    if kind == Kind.CALL:
        return [Encoding("identity", size), Encoding("ascii-encode", 0)]
    encs = [Encoding("identity", size)]
    if size > 1:
        encs.append(Encoding("byte-swap", size, True))
    for w in (4, 2, 1):
        if w < size:
            encs += [Encoding("zero-extend", w), Encoding("zero-extend", w, True)]
    for w in (4, 2, 1):
        if w < size:
            encs += [Encoding("sign-extend", w), Encoding("sign-extend", w, True)]
    for k in ("+1", "-1"):
        encs.append(Encoding(k, size))
        if size > 1:
            encs.append(Encoding(k, size, True))
    encs.append(Encoding("ascii-decode", 0))
    return encs


def encode(enc: Encoding, operand: bytes) -> bytes | None:
    """Input bytes that the program would turn into ``operand`` under ``enc``.

    Returns None when the value has no representation (e.g. it does not fit
    the narrower field).
    """
    k = enc.kind
    if k == "identity":
        return bytes(operand[:enc.width]) if enc.width else bytes(operand)
    if k == "ascii-encode":
        # operand is a decimal string the program produced from a binary field
        s = bytes(operand).rstrip(b"\0")
        if not s or not s.isdigit():
            return None
        return None if len(s) > 10 else str(int(s)).encode()
    size = len(operand)
    v = _to_int(operand)
    if k == "byte-swap":
        return _pack(v, size, True)
    if k == "zero-extend":
        return _pack(v, enc.width, enc.big) if v < (1 << (8 * enc.width)) else None
    if k == "sign-extend":
        w = enc.width
        high = v >> (8 * w - 1)
        if high != (1 << (8 * (size - w) + 1)) - 1:
            return None
        return _pack(v, w, enc.big)
    if k == "+1":
        return _pack(v - 1, size, enc.big)
    if k == "-1":
        return _pack(v + 1, size, enc.big)
    if k == "ascii-decode":
        return str(v).encode()
    raise ValueError(f"unknown encoding {k}")


def decode(enc: Encoding, image: bytes, size: int) -> bytes | None:
    """Operand value (little-endian, ``size`` bytes) the program derives from ``image``."""
    k = enc.kind
    if k == "identity":
        return bytes(image)
    if k == "ascii-encode":
        return str(int.from_bytes(image, "big")).encode()
    if k == "ascii-decode":
        if not image.isdigit():
            return None
        return _pack(int(image), size, False)
    v = int.from_bytes(image, "big" if enc.big else "little")
    if k == "byte-swap" or k == "zero-extend":
        return _pack(v, size, False)
    if k == "sign-extend":
        bits = 8 * len(image)
        if v >> (bits - 1):
            v -= 1 << bits
        return _pack(v, size, False)
    if k == "+1":
        return _pack(v + 1, size, False)
    if k == "-1":
        return _pack(v - 1, size, False)
    raise ValueError(f"unknown encoding {k}")


# -- input-to-state ------------------------------------------------------------------

@dataclass(frozen=True)
class OperandI2S:
    encoding: Encoding
    offset: int
    width: int

    def span(self) -> range:
        return range(self.offset, self.offset + self.width)


I2SEntry = tuple  # (OperandI2S | None, OperandI2S | None)


def _search(data: bytes, image: bytes, dep_pos: np.ndarray, full: bool) -> int | None:
    """First offset holding ``image`` that overlaps a dependency byte.

    With ``full`` every image byte must itself be a dependency.
    """
    L = len(image)
    n = len(data)
    if L == 0 or L > n:
        return None
    deps = set(int(d) for d in dep_pos)
    tried = set()
    for d in sorted(deps):
        for o in range(max(0, d - L + 1), min(d, n - L) + 1):
            if o in tried:
                continue
            tried.add(o)
            if full and any(b not in deps for b in range(o, o + L)):
                continue
            if data[o:o + L] == image:
                return o
    return None


def detect_operand(inst: Instance, op: int, dep_pos: np.ndarray, data: bytes) -> OperandI2S | None:
    if len(dep_pos) == 0:
        return None
    operand = inst.operand(op)
    images = []
    for enc in candidate_encodings(inst.size, inst.kind):
        image = encode(enc, operand)
        if image:
            images.append((enc, image))
    # images backed entirely by dependencies beat partial overlaps
    for full in (True, False):
        for enc, image in images:
            o = _search(data, image, dep_pos, full)
            if o is not None:
                return OperandI2S(enc, o, len(image))
    return None


def detect_i2s(ct: ComparisonTable, deps: DepsMap, s: int, j: int, data: bytes) -> I2SEntry:
    inst = ct[s].instances[j]
    return tuple(detect_operand(inst, op, deps.positions(s, j, op), data) for op in (0, 1))


# -- checksum index ------------------------------------------------------------------

class CkStatus(str, enum.Enum):
    CANDIDATE = "candidate"
    CONFIRMED = "confirmed"
    FALSE_POSITIVE = "false-positive"


@dataclass
class ChecksumInfo:
    status: CkStatus = CkStatus.CANDIDATE
    patched: bool = False
    operand: int = 1          # which operand holds the stored (expected) value
    encoding: Encoding | None = None
    offset: int = -1
    width: int = 0
    site: int = 0

    @property
    def valid(self) -> bool:
        return self.status != CkStatus.FALSE_POSITIVE


class ChecksumIndex(dict):
    """``addr -> ChecksumInfo``; the only cross-input mutable state."""

    def patches(self) -> frozenset[int]:
        return frozenset(a for a, c in self.items() if c.patched and c.valid)

    def is_valid(self, addr: int) -> bool:
        c = self.get(addr)
        return c is not None and c.valid

    def mark_false_positive(self, addr: int) -> None:
        c = self[addr]
        c.status = CkStatus.FALSE_POSITIVE
        c.patched = False

    def confirm(self, addr: int) -> None:
        c = self[addr]
        if c.status == CkStatus.CANDIDATE:
            c.status = CkStatus.CONFIRMED

    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in CkStatus}
        for c in self.values():
            out[c.status.value] += 1
        return out

    def to_text(self) -> str:
        lines = ["# addr status patched operand encoding"]
        for a in sorted(self):
            c = self[a]
            lines.append(f"{a:#x} {c.status.value} {int(c.patched)} op{c.operand + 1} {c.encoding}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ChecksumIndex":
        ci = cls()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            addr, status, patched = int(parts[0], 16), CkStatus(parts[1]), bool(int(parts[2]))
            operand = int(parts[3][2:]) - 1 if len(parts) > 3 else 1
            enc = None
            if len(parts) > 4 and parts[4] != "None":
                kind, rest = parts[4].split("/")
                enc = Encoding(kind, int(rest[:-2]), rest.endswith("be"))
            ci[addr] = ChecksumInfo(status, patched and status != CkStatus.FALSE_POSITIVE,
                                    operand, enc, -1, enc.width if enc else 0)
        return ci


def is_checksum_candidate(r: I2SEntry, deps: DepsMap, s: int, j: int) -> int | None:
    """Index of the stored-value operand when (s, j) looks like a checksum test."""
    for x in (0, 1):
        y = 1 - x
        ix, iy = r[x], r[y]
        if ix is None or ix.width < 2 or iy is not None:
            continue
        computed = deps[(s, j, y)]
        if not computed.any():
            continue
        # the computed operand must not read the bytes holding the expected value
        if computed[ix.offset:ix.offset + ix.width].any():
            continue
        return x
    return None


def mark_checksums(r: I2SEntry, deps: DepsMap, ci: ChecksumIndex, ct: ComparisonTable,
                   s: int, j: int) -> ChecksumIndex:
    x = is_checksum_candidate(r, deps, s, j)
    if x is None:
        return ci
    addr = ct[s].addr
    if addr not in ci:
        i2s = r[x]
        ci[addr] = ChecksumInfo(CkStatus.CANDIDATE, False, x, i2s.encoding,
                                i2s.offset, i2s.width, s)
    return ci


def patch_all_checksums(ci: ChecksumIndex) -> ChecksumIndex:
    for c in ci.values():
        c.patched = c.valid
    return ci


# -- operand fuzzing ------------------------------------------------------------------

@dataclass
class SiteStats:
    attempts: int = 0
    failed: int = 0


@dataclass
class OperandFuzzState:
    """Per-site success history deciding whether operand fuzzing visits a site."""

    stats: dict[int, SiteStats] = field(default_factory=dict)
    floor: float = 0.05

    def probability(self, site: int) -> float:
        st = self.stats.get(site)
        if st is None or st.attempts == 0:
            return 1.0
        return max(self.floor, 1.0 - st.failed / st.attempts)

    def update(self, site: int, success: bool) -> None:
        st = self.stats.setdefault(site, SiteStats())
        st.attempts += 1
        if not success:
            st.failed += 1


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    pos = np.flatnonzero(mask)
    if len(pos) == 0:
        return []
    out = []
    start = prev = int(pos[0])
    for p in pos[1:]:
        p = int(p)
        if p != prev + 1:
            out.append((start, prev))
            start = p
        prev = p
    out.append((start, prev))
    return out


def _value_variants(value: bytes, kind: Kind) -> list[bytes]:
    if kind == Kind.CALL:
        out = [value]
        stripped = value.rstrip(b"\0")
        if stripped and stripped != value:
            out.append(stripped)
        return out
    size = len(value)
    v = _to_int(value)
    return [value, _pack(v + 1, size, False), _pack(v - 1, size, False)]


def substitutions(data: bytes, inst: Instance, op: int, dep_mask: np.ndarray,
                  i2s: OperandI2S | None) -> list[bytes]:
    """Candidate inputs writing the other operand's value over the bytes feeding ``op``."""
    other = inst.operand(1 - op)
    out: list[bytes] = []
    seen = {bytes(data)}

    def put(offset: int, image: bytes) -> None:
        if offset < 0 or offset + len(image) > len(data) or not image:
            return
        buf = bytearray(data)
        buf[offset:offset + len(image)] = image
        cand = bytes(buf)
        if cand not in seen:
            seen.add(cand)
            out.append(cand)

    variants = _value_variants(other, inst.kind)
    if i2s is not None:
        for val in variants:
            image = encode(i2s.encoding, val)
            if image is not None and len(image) == i2s.width:
                put(i2s.offset, image)
    encs = candidate_encodings(inst.size, inst.kind)
    for start, end in _runs(dep_mask):
        for val in variants:
            for enc in encs:
                image = encode(enc, val)
                if not image:
                    continue
                put(start, image)
                if end - len(image) + 1 != start:
                    put(end - len(image) + 1, image)
    return out


def fuzz_operands(executor: Executor, data: bytes, ct: ComparisonTable, deps: DepsMap,
                  r: dict, ci: ChecksumIndex, patches: Iterable[int] = (),
                  rng: random.Random | None = None, state: OperandFuzzState | None = None,
                  sites: Sequence[int] | None = None) -> list[tuple[bytes, ExecutionTrace]]:
    """Surgical substitutions driven by recorded operand values.

    Returns the (input, trace) pairs that were interesting.
    """
    rng = rng or random.Random(0)
    state = state or OperandFuzzState()
    patches = frozenset(patches)
    found = []
    for s in (sites if sites is not None else sites_by_exec_order(ct)):
        rec = ct[s]
        if ci.is_valid(rec.addr):
            continue
        if rng.random() >= state.probability(s):
            continue
        tried = set()
        success = False
        attempted = False
        for j, inst in enumerate(rec.instances):
            entry = r.get((s, j), (None, None))
            for op in (0, 1):
                mask = deps[(s, j, op)]
                if not mask.any():
                    continue
                key = (inst, op, mask.tobytes())
                if key in tried:
                    continue
                tried.add(key)
                for cand in substitutions(data, inst, op, mask, entry[op]):
                    attempted = True
                    crashes = len(executor.crashes)
                    tr, interesting = executor.run_observed(cand, patches, SURGICAL)
                    if interesting:
                        found.append((cand, tr))
                    success |= interesting or len(executor.crashes) > crashes
        if attempted:
            state.update(s, success)
    return found


# -- topological order and repair ------------------------------------------------------

@dataclass(frozen=True)
class ChecksumGroup:
    site: int
    j: int
    addr: int
    offset: int
    width: int
    operand: int
    encoding: Encoding
    ts: int = 0

    def span(self) -> range:
        return range(self.offset, self.offset + self.width)


def checksum_groups(ct: ComparisonTable, deps: DepsMap, r: dict, ci: ChecksumIndex,
                    data: bytes | None = None) -> list[ChecksumGroup]:
    groups = []
    for s, rec in ct.items():
        info = ci.get(rec.addr)
        if info is None or not info.valid:
            continue
        for j, inst in enumerate(rec.instances):
            x = is_checksum_candidate(r.get((s, j), (None, None)), deps, s, j)
            if x is None:
                continue
            i2s = r[(s, j)][x]
            enc = i2s.encoding
            # symmetric values match several encodings; the recorded one wins
            if (data is not None and info.encoding is not None and info.encoding != enc
                    and encode(info.encoding, inst.operand(x)) == data[i2s.offset:i2s.offset + i2s.width]):
                enc = info.encoding
            groups.append(ChecksumGroup(s, j, rec.addr, i2s.offset, i2s.width, x, enc, rec.ts))
    return groups


def topological_sort(groups: list[ChecksumGroup], deps: DepsMap) -> list[ChecksumGroup]:
    """Innermost first: A precedes B when B's computed value reads A's stored bytes."""
    n = len(groups)
    succ: list[set[int]] = [set() for _ in range(n)]
    indeg = [0] * n
    for b, gb in enumerate(groups):
        computed = deps[(gb.site, gb.j, 1 - gb.operand)]
        for a, ga in enumerate(groups):
            if a != b and computed[ga.offset:ga.offset + ga.width].any() and b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1

    def key(i: int):
        g = groups[i]
        return (g.ts, g.j, g.offset)

    order = []
    remaining = set(range(n))
    while remaining:
        ready = [i for i in remaining if indeg[i] == 0]
        if not ready:
            pick = min(remaining, key=key)
            log.warning("checksum dependency cycle; breaking at site %04x", groups[pick].site)
        else:
            pick = min(ready, key=key)
        order.append(groups[pick])
        remaining.discard(pick)
        for b in succ[pick]:
            indeg[b] -= 1
    return order


def groups_from_tags(tags, ci: ChecksumIndex) -> list[ChecksumGroup]:
    """Rebuild checksum groups from a tag array alone (derived tags, crash repair).

    Each maximal run of checksum-flagged bytes sharing one site is a group;
    groups whose bytes are verified by an outer checksum come first.
    """
    runs = []
    b, n = 0, len(tags)
    while b < n:
        t = tags[b]
        if not t.id or not t.checksum:
            b += 1
            continue
        e = b
        while e + 1 < n and tags[e + 1].id == t.id and tags[e + 1].checksum:
            e += 1
        runs.append((b, e, t))
        b = e + 1
    site_to_addr = {c.site: a for a, c in ci.items()}
    outer_of = {}
    for _, _, t in runs:
        if t.depends_on:
            outer_of.setdefault(t.id, t.depends_on)

    def depth(site: int) -> int:
        d, seen = 0, set()
        while site in outer_of and site not in seen:
            seen.add(site)
            site = outer_of[site]
            d += 1
        return d

    groups = []
    for start, end, t in runs:
        addr = site_to_addr.get(t.id)
        info = ci.get(addr) if addr is not None else None
        if info is None or not info.valid or info.encoding is None:
            continue
        w = info.width
        for off in range(start, end + 1, w):
            if off + w <= end + 1:
                groups.append(ChecksumGroup(t.id, -1, addr, off, w, info.operand,
                                            info.encoding, t.ts))
    groups.sort(key=lambda g: (-depth(g.site), g.offset))
    return groups


def _locate(ct: ComparisonTable, g: ChecksumGroup, data: bytes) -> Instance | None:
    rec = ct.get(g.site)
    if rec is None:
        return None
    stored_image = bytes(data[g.offset:g.offset + g.width])
    order = list(range(len(rec.instances)))
    if 0 <= g.j < len(order):
        order.remove(g.j)
        order.insert(0, g.j)
    for j in order:
        inst = rec.instances[j]
        if encode(g.encoding, inst.operand(g.operand)) == stored_image:
            return inst
    return None


@dataclass
class FixResult:
    ci: ChecksumIndex
    data: bytes
    ok: bool
    repaired: list[int] = field(default_factory=list)


def fix_checksums(executor: Executor, ci: ChecksumIndex, data: bytes, tags,
                  order: list[ChecksumGroup] | None = None) -> FixResult:
    """Repair checksum fields innermost first, verifying each by path hash.

    Several instances of one comparison (e.g. a CRC checked per chunk) are
    all rewritten before that address is unpatched.
    """
    tagged_sites = {t.id for t in tags if t.id and t.checksum}
    if order is None:
        groups = groups_from_tags(tags, ci)
    else:
        groups = [g for g in order if g.site in tagged_sites and ci.is_valid(g.addr)
                  and any(tags[b].checksum and tags[b].id == g.site for b in g.span()
                          if b < len(tags))]
    buf = bytearray(data)
    active = set(ci.patches()) | {g.addr for g in groups}
    base = executor.run(bytes(buf), active)
    h = path_hash(base.counts)
    ct = build_ct(base.cmps)
    last_index = {g.addr: i for i, g in enumerate(groups)}
    repaired = []
    for i, g in enumerate(groups):
        inst = _locate(ct, g, buf)
        if inst is None:
            return FixResult(ci, bytes(buf), False, repaired)
        image = encode(g.encoding, inst.operand(1 - g.operand))
        if image is None or len(image) != g.width:
            ci.mark_false_positive(g.addr)
            return FixResult(ci, bytes(buf), False, repaired)
        buf[g.offset:g.offset + g.width] = image
        repaired.append(g.offset)
        if last_index[g.addr] == i:
            active.discard(g.addr)
        tr = executor.run(bytes(buf), active)
        ct = build_ct(tr.cmps)
        if path_hash(tr.counts) != h:
            ci.mark_false_positive(g.addr)
            return FixResult(ci, bytes(buf), False, repaired)
        if last_index[g.addr] == i:
            ci.confirm(g.addr)
    untagged = sorted(active)
    h1 = executor.hash_of(bytes(buf), (), Mode.LIGHT)
    if h1 == h:
        return FixResult(ci, bytes(buf), True, repaired)
    for a in untagged:
        if executor.hash_of(bytes(buf), (a,), Mode.LIGHT) != h1:
            ci.mark_false_positive(a)
    return FixResult(ci, bytes(buf), False, repaired)
