"""Cooperative instrumentation for in-process targets.

A target is a plain function ``func(t, data) -> Status`` that drives a
:class:`Tracer` explicitly: ``t.block`` on every labeled basic block,
``t.cmp`` / ``t.memcmp`` before every comparison it wants observed, and
``t.frame`` around calls so that coverage and comparison sites become
context sensitive.
"""

from __future__ import annotations

import enum
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable

MAP_BITS = 18
MAP_SIZE = 1 << MAP_BITS
MAX_BLOB = 32
MASK64 = (1 << 64) - 1

DEFAULT_MAX_EVENTS = 200_000


class Status(enum.IntEnum):
    OK = 0
    REJECT = 1
    CRASH = 2
    TIMEOUT = 3


class Kind(enum.IntEnum):
    COMPARE = 0
    CALL = 1


class Mode(enum.Enum):
    FULL = "full-instr"
    LIGHT = "light-instr"


@dataclass(frozen=True)
class CmpEvent:
    addr: int
    ctx: int
    size: int
    op1: bytes
    op2: bytes
    kind: Kind = Kind.COMPARE

    @property
    def site(self) -> int:
        return site_id(self.addr, self.ctx)


@dataclass(frozen=True)
class EdgeEvent:
    src: int
    dst: int
    ctx: int

    @property
    def index(self) -> int:
        return edge_index(self.src, self.dst, self.ctx)


def site_id(addr: int, ctx: int) -> int:
    """16-bit comparison site: address XOR calling context.

    Zero is reserved for "untagged", so a site that would hash to 0 is
    folded onto 0xFFFF.
    """
    s = (addr ^ ctx ^ (ctx >> 16) ^ (ctx >> 32) ^ (ctx >> 48)) & 0xFFFF
    return s or 0xFFFF


def edge_index(src: int, dst: int, ctx: int) -> int:
    h = (src * 0x9E3779B1) ^ ((dst * 0x85EBCA77) >> 1) ^ (ctx * 0xC2B2AE3D)
    h ^= h >> 29
    return (h ^ (h >> MAP_BITS)) & (MAP_SIZE - 1)


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & MASK64


def _rotr(x: int, r: int) -> int:
    return ((x >> r) | (x << (64 - r))) & MASK64


def int_bytes(value: int, size: int) -> bytes:
    return (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")


class TargetTimeout(Exception):
    pass


class Tracer:
    """Hook sink for one execution."""

    __slots__ = ("patches", "full", "ctx", "prev", "counts", "cmps", "edges",
                 "budget", "keep_edges")

    def __init__(self, patches: Iterable[int] = (), full: bool = True,
                 max_events: int = DEFAULT_MAX_EVENTS, keep_edges: bool = False):
        self.patches = frozenset(patches)
        self.full = full
        self.ctx = 0
        self.prev = 0
        self.counts: dict[int, int] = {}
        self.cmps: list[CmpEvent] = []
        self.edges: list[EdgeEvent] | None = [] if keep_edges else None
        self.budget = max_events
        self.keep_edges = keep_edges

    def _tick(self) -> None:
        self.budget -= 1
        if self.budget < 0:
            raise TargetTimeout()

    def block(self, bid: int) -> None:
        self._tick()
        idx = edge_index(self.prev, bid, self.ctx)
        self.counts[idx] = self.counts.get(idx, 0) + 1
        if self.edges is not None:
            self.edges.append(EdgeEvent(self.prev, bid, self.ctx))
        self.prev = bid

    def push(self, ret_site: int) -> None:
        self.ctx = _rotl(self.ctx, 7) ^ (ret_site & MASK64)

    def pop(self, ret_site: int) -> None:
        self.ctx = _rotr(self.ctx ^ (ret_site & MASK64), 7)

    @contextmanager
    def frame(self, ret_site: int):
        self.push(ret_site)
        try:
            yield
        finally:
            self.pop(ret_site)

    def cmp(self, addr: int, a: int, b: int, size: int, outcome: bool,
            passing: bool | None = True) -> bool:
        """Log an integer comparison and return the branch to take.

        ``outcome`` is the truth value the target computed. ``passing`` is
        the outcome that lets parsing continue; a patched address returns it
        regardless of the operands. Loop conditions pass ``passing=None`` so
        they can never be patched.
        """
        self._tick()
        if self.full:
            self.cmps.append(CmpEvent(addr, self.ctx, size,
                                      int_bytes(a, size), int_bytes(b, size)))
        if passing is not None and addr in self.patches:
            return passing
        return outcome

    def memcmp(self, addr: int, a: bytes, b: bytes, n: int | None = None,
               passing: bool | None = True) -> bool:
        """Comparator call (memcmp/strncmp style). True when equal."""
        self._tick()
        if n is None:
            n = max(len(a), len(b))
        a = bytes(a[:n])
        b = bytes(b[:n])
        if self.full:
            w = min(n, MAX_BLOB)
            self.cmps.append(CmpEvent(addr, self.ctx, w, a[:w].ljust(w, b"\0"),
                                      b[:w].ljust(w, b"\0"), Kind.CALL))
        if passing is not None and addr in self.patches:
            return passing
        return a == b


@dataclass
class ExecutionTrace:
    status: Status
    counts: dict[int, int]
    cmps: list[CmpEvent]
    edges: list[EdgeEvent] | None = None
    events: int = 0
    error: str | None = None

    @property
    def crashed(self) -> bool:
        return self.status == Status.CRASH


TargetFunc = Callable[[Tracer, bytes], Status]


@dataclass
class TargetAdapter:
    name: str
    func: TargetFunc
    description: str = ""
    deep_blocks: tuple[int, ...] = ()
    seeds: list[bytes] = field(default_factory=list)


def run_target(target: TargetAdapter, data: bytes, patches: Iterable[int] = (),
               mode: Mode = Mode.FULL, max_events: int = DEFAULT_MAX_EVENTS,
               keep_edges: bool = False) -> ExecutionTrace:
    if not data:
        raise ValueError("input must be non-empty")
    t = Tracer(patches, full=mode is Mode.FULL, max_events=max_events,
               keep_edges=keep_edges)
    error = None
    try:
        status = target.func(t, bytes(data))
        if status is None:
            status = Status.OK
    except TargetTimeout:
        status = Status.TIMEOUT
    except (IndexError, ValueError, ZeroDivisionError, KeyError) as exc:
        # stands in for memory-safety violations in native targets
        status = Status.CRASH
        error = f"{type(exc).__name__}: {exc}"
    return ExecutionTrace(Status(status), t.counts, t.cmps, t.edges,
                          max_events - t.budget, error)


def block_index_set(target: TargetAdapter, data: bytes, patches: Iterable[int] = ()) -> set[int]:
    """Destination blocks visited by one run (debug/acceptance helper)."""
    tr = run_target(target, data, patches, Mode.LIGHT, keep_edges=True)
    return {e.dst for e in tr.edges or ()}
