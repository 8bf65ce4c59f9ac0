"""Comparison table: what every comparison site saw during one execution."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from .target import CmpEvent, Kind

MAX_INSTANCES = 256


@dataclass(frozen=True)
class Instance:
    op1: bytes
    op2: bytes
    size: int
    kind: Kind

    def operand(self, op: int) -> bytes:
        return self.op2 if op else self.op1


@dataclass
class SiteRecord:
    addr: int
    ts: int
    hits: int = 0
    instances: deque = field(default_factory=lambda: deque(maxlen=MAX_INSTANCES))


class ComparisonTable(dict):
    """``site -> SiteRecord``; insertion order equals first-seen order."""

    def hits(self, site: int) -> int:
        rec = self.get(site)
        return rec.hits if rec else 0

    def operand(self, site: int, j: int, op: int) -> bytes:
        return self[site].instances[j].operand(op)

    def keys_ijo(self):
        """Every (site, instance, operand) triple in the table."""
        for s, rec in self.items():
            for j in range(len(rec.instances)):
                yield s, j, 0
                yield s, j, 1


def build_ct(events: Iterable[CmpEvent]) -> ComparisonTable:
    ct = ComparisonTable()
    for ev in events:
        s = ev.site
        rec = ct.get(s)
        if rec is None:
            rec = ct[s] = SiteRecord(ev.addr, len(ct))
        rec.hits += 1
        rec.instances.append(Instance(ev.op1, ev.op2, ev.size, ev.kind))
    return ct


def sites_by_exec_order(ct: ComparisonTable) -> list[int]:
    return sorted(ct, key=lambda s: ct[s].ts)


def dump(ct: ComparisonTable) -> str:
    lines = []
    for s in sites_by_exec_order(ct):
        rec = ct[s]
        first, last = rec.instances[0], rec.instances[-1]
        lines.append(f"{s:04x} addr={rec.addr:#x} ts={rec.ts} hits={rec.hits} "
                     f"first={first.op1.hex()}/{first.op2.hex()} "
                     f"last={last.op1.hex()}/{last.op2.hex()}")
    return "\n".join(lines)
