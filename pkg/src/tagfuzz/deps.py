"""Bit-flip dependency inference between input bytes and comparison operands."""

from __future__ import annotations

from collections.abc import Callable, Iterable

import numpy as np

from .cmplog import ComparisonTable, build_ct
from .coverage import SURGICAL
from .executor import Executor
from .target import ExecutionTrace, TargetAdapter

SURGICAL_CAP = 3000

Key = tuple[int, int, int]  # (site, instance, operand)


class DepsMap(dict):
    """``(site, j, op) -> bool[len(input)]``."""

    def __init__(self, length: int, ct: ComparisonTable | None = None):
        super().__init__()
        self.length = length
        if ct is not None:
            for key in ct.keys_ijo():
                self[key] = np.zeros(length, dtype=bool)

    def union(self, site: int, op: int, instances: int | None = None) -> np.ndarray:
        """Bytes on which operand ``op`` of any instance of ``site`` depends."""
        out = np.zeros(self.length, dtype=bool)
        j = 0
        while (site, j, op) in self:
            out |= self[(site, j, op)]
            j += 1
            if instances is not None and j >= instances:
                break
        return out

    def positions(self, site: int, j: int, op: int) -> np.ndarray:
        return np.flatnonzero(self[(site, j, op)])

    def count(self, site: int, j: int, op: int) -> int:
        return int(np.count_nonzero(self[(site, j, op)]))


def _as_executor(target) -> Executor:
    return target if isinstance(target, Executor) else Executor(target)


def flip_bit(data: bytes | bytearray, b: int, k: int) -> bytes:
    buf = bytearray(data)
    buf[b] ^= 1 << k
    return bytes(buf)


def diff_into(deps: DepsMap, ct: ComparisonTable, ct2: ComparisonTable, b: int) -> None:
    """Mark byte ``b`` for every operand that changed at a site whose hit
    count did not change (local divergence guard)."""
    for s, rec in ct.items():
        rec2 = ct2.get(s)
        if rec2 is None or rec2.hits != rec.hits:
            continue
        for j, (x, y) in enumerate(zip(rec.instances, rec2.instances)):
            if x.op1 != y.op1:
                deps[(s, j, 0)][b] = True
            if x.op2 != y.op2:
                deps[(s, j, 1)][b] = True


def get_deps(target: TargetAdapter | Executor, data: bytes, patches: Iterable[int] = (),
             map_fn: Callable = map, cap: int = SURGICAL_CAP
             ) -> tuple[ComparisonTable, DepsMap, list[tuple[bytes, ExecutionTrace]]]:
    """Return (CT, Deps, discovered) for ``data``.

    ``map_fn`` runs the per-byte work; pass ``ThreadPoolExecutor.map`` to
    spread it. Results are merged in byte order, so the outcome does not
    depend on scheduling.
    """
    if len(data) > cap:
        raise ValueError(f"input of {len(data)} bytes exceeds the surgical cap ({cap})")
    ex = _as_executor(target)
    patches = frozenset(patches)
    data = bytes(data)
    base = ex.run(data, patches)
    if ex.coverage is not None:
        # loop-bucketization maxima are scoped to this surgical pass
        ex.coverage.begin_stage(base.counts)
        ex.observe(data, base, SURGICAL)
    ct = build_ct(base.cmps)
    deps = DepsMap(len(data), ct)

    def flips(b: int) -> list[tuple[bytes, ExecutionTrace]]:
        out = []
        for k in range(8):
            mutated = flip_bit(data, b, k)
            out.append((mutated, ex.run(mutated, patches)))
        return out

    discovered = []
    for b, runs in enumerate(map_fn(flips, range(len(data)))):
        for mutated, tr in runs:
            diff_into(deps, ct, build_ct(tr.cmps), b)
            if ex.observe(mutated, tr, SURGICAL):
                discovered.append((mutated, tr))
    return ct, deps, discovered
