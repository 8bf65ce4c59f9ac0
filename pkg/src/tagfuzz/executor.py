from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .coverage import STRUCTURE, CoverageMap, path_hash
from .target import (DEFAULT_MAX_EVENTS, ExecutionTrace, Mode, Status, TargetAdapter,
                     run_target)


class BudgetExhausted(Exception):
    pass


@dataclass
class CrashRecord:
    data: bytes
    trace: ExecutionTrace
    exec_no: int


@dataclass
class Executor:
    """Runs one target, counts executions and owns the novelty state.

    Without a coverage map nothing is ever interesting, which is what the
    stand-alone analysis functions want.
    """

    target: TargetAdapter
    coverage: CoverageMap | None = None
    budget: int | None = None
    max_events: int = DEFAULT_MAX_EVENTS
    execs: int = 0
    events: int = 0
    crashes: list[CrashRecord] = field(default_factory=list)
    timeouts: int = 0
    _crash_map: CoverageMap | None = None

    def run(self, data: bytes, patches: Iterable[int] = (), mode: Mode = Mode.FULL) -> ExecutionTrace:
        if self.budget is not None and self.execs >= self.budget:
            raise BudgetExhausted()
        self.execs += 1
        tr = run_target(self.target, data, patches, mode, self.max_events)
        self.events += tr.events
        return tr

    def observe(self, data: bytes, trace: ExecutionTrace, stage: str = STRUCTURE) -> bool:
        """Feed one execution into the novelty state; True when it belongs in the queue."""
        if self.coverage is None:
            return False
        if trace.status == Status.TIMEOUT:
            self.timeouts += 1
            return False
        if trace.status == Status.CRASH:
            if self._crash_map is None:
                self._crash_map = CoverageMap()
            if self._crash_map.is_interesting(trace.counts):
                self.crashes.append(CrashRecord(bytes(data), trace, self.execs))
            return False
        self.coverage.record(trace.counts)
        return bool(self.coverage.is_interesting(trace.counts, stage))

    def run_observed(self, data: bytes, patches: Iterable[int] = (), stage: str = STRUCTURE,
                     mode: Mode = Mode.FULL) -> tuple[ExecutionTrace, bool]:
        tr = self.run(data, patches, mode)
        return tr, self.observe(data, tr, stage)

    def hash_of(self, data: bytes, patches: Iterable[int] = (), mode: Mode = Mode.LIGHT) -> int:
        return path_hash(self.run(data, patches, mode).counts)
