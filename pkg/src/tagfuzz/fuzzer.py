"""Two-stage fuzzing loop: surgical analysis and structure-aware stacking."""

from __future__ import annotations

import json
import logging
import random
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import tags as tagio
from .cmplog import sites_by_exec_order
from .coverage import STRUCTURE, CoverageMap
from .deps import SURGICAL_CAP, get_deps
from .executor import BudgetExhausted, Executor
from .havoc import havoc_mutate
from .i2s import (ChecksumGroup, ChecksumIndex, OperandFuzzState, checksum_groups, detect_i2s,
                  fix_checksums, fuzz_operands, mark_checksums, patch_all_checksums,
                  topological_sort)
from .structure import PR_CHUNK12, PR_EXTEND, PR_I2S, chunk_mutation, field_mutation
from .tags import TagArray, clear_checksum_flags, derive_tags, place_all_tags
from .target import (DEFAULT_MAX_EVENTS, ExecutionTrace, Mode, Status, TargetAdapter,
                     block_index_set, run_target)

log = logging.getLogger(__name__)

BASE_ENERGY = 64
WINDOW_MS = 50_000
MAX_STACK = 256
# AFL skip probabilities for non-favored entries
SKIP_PENDING_FAV, SKIP_NFAV_OLD, SKIP_NFAV_NEW = 0.99, 0.95, 0.75


@dataclass
class Config:
    budget: int = 100_000
    seed: int = 0
    pr_field: float = 1 / 15
    pr_chunk: float = 1 / 15
    pr_i2s: float = PR_I2S
    pr_extend: float = PR_EXTEND
    pr_chunk12: float = PR_CHUNK12
    surgical_cap: int = SURGICAL_CAP
    operand_fuzz: bool = True
    checksums: bool = True
    struct_mutations: bool = True
    window_ms: int = WINDOW_MS
    ms_per_exec: float = 5.0
    max_stack: int = MAX_STACK
    max_events: int = DEFAULT_MAX_EVENTS
    stats_every: int = 5_000
    seconds: float | None = None

    def validate(self) -> None:
        for name in ("pr_field", "pr_chunk", "pr_i2s", "pr_extend", "pr_chunk12"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")
        if self.pr_field + self.pr_chunk > 1.0:
            raise ValueError("pr_field + pr_chunk must not exceed 1")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.seconds is not None and self.seconds <= 0:
            raise ValueError("seconds must be positive")
        if self.surgical_cap < 1:
            raise ValueError("surgical cap must be at least 1")
        if self.max_stack < 1:
            raise ValueError("max stack must be at least 1")
        if self.window_ms < 0 or self.ms_per_exec < 0:
            raise ValueError("window_ms and ms_per_exec must be non-negative")


@dataclass
class QueueEntry:
    id: int
    data: bytes
    tags: TagArray | None = None
    surgical: bool = False
    repaired_ok: bool = False
    times_fuzzed: int = 0
    found_at_ms: float = 0.0
    provenance: str = "seed"
    cost: int = 1
    edges: frozenset = frozenset()
    order: list[ChecksumGroup] = field(default_factory=list)
    favored: bool = False

    @property
    def tag_state(self) -> str:
        if self.tags is None:
            return "absent"
        return "surgical" if self.surgical else "derived"


@dataclass
class CrashEntry:
    data: bytes
    repaired: bytes | None
    error: str | None
    reproduces: bool = False


def choose_step(rng: random.Random, pr_field: float, pr_chunk: float) -> str:
    u = rng.random()
    if u < pr_field:
        return "field"
    if u < pr_field + pr_chunk:
        return "chunk"
    return "havoc"


def energy(entry: QueueEntry, median_cost: float, median_len: float) -> int:
    """Children per structure-stage visit: baseline scaled by relative speed and size."""
    speed = min(4.0, max(0.25, median_cost / max(1, entry.cost)))
    size = min(2.0, max(0.5, median_len / max(1, len(entry.data))))
    return int(round(BASE_ENERGY * speed * size))


def surgical_probability(now_ms: float, last_interesting_ms: float, window_ms: float) -> float:
    """Linear ramp from 0 (a find just happened) to 1 (a full window without finds)."""
    if window_ms <= 0:
        return 1.0
    return min(1.0, max(0.0, (now_ms - last_interesting_ms) / window_ms))


class Fuzzer:
    def __init__(self, target: TargetAdapter, config: Config | None = None,
                 out_dir: str | Path | None = None):
        self.target = target
        self.config = config or Config()
        self.config.validate()
        self.rng = random.Random(self.config.seed)
        self.coverage = CoverageMap()
        self.executor = Executor(target, self.coverage, self.config.budget,
                                 self.config.max_events)
        self.ci = ChecksumIndex()
        self.op_state = OperandFuzzState()
        self.queue: list[QueueEntry] = []
        self.crashes: list[CrashEntry] = []
        self.last_interesting_ms = 0.0
        self.out_dir = Path(out_dir) if out_dir else None
        self._cycle: list[QueueEntry] = []
        self._seen_crashes = 0
        self._next_stats = self.config.stats_every
        self._deadline = None
        self.stats_log: list[dict] = []
        if self.out_dir:
            for sub in ("queue", "crashes"):
                (self.out_dir / sub).mkdir(parents=True, exist_ok=True)
            (self.out_dir / "stats.jsonl").write_text("")

    # -- bookkeeping ------------------------------------------------------------------

    @property
    def now_ms(self) -> float:
        return self.executor.execs * self.config.ms_per_exec

    def patches(self) -> frozenset[int]:
        return self.ci.patches() if self.config.checksums else frozenset()

    def add_entry(self, data: bytes, trace: ExecutionTrace, tags: TagArray | None,
                  provenance: str) -> QueueEntry:
        e = QueueEntry(len(self.queue), bytes(data), tags, found_at_ms=self.now_ms,
                       provenance=provenance, cost=max(1, trace.events),
                       edges=frozenset(trace.counts))
        self.queue.append(e)
        self.last_interesting_ms = self.now_ms
        return e

    def _tick(self) -> None:
        if self._deadline is not None and time.monotonic() > self._deadline:
            raise BudgetExhausted()
        if self.executor.execs >= self._next_stats:
            self._next_stats += self.config.stats_every
            self._write_stats()

    def _handle_crashes(self, tags: TagArray | None) -> None:
        """Persist new crashes verbatim, then try to repair them.

        A crash that only happens under checksum patches and disappears once
        repaired is treated as an ordinary input for the queue.
        """
        crashes = self.executor.crashes
        while self._seen_crashes < len(crashes):
            rec = crashes[self._seen_crashes]
            idx = self._seen_crashes
            self._seen_crashes += 1
            if self.out_dir:
                (self.out_dir / "crashes" / f"id_{idx:06d}").write_bytes(rec.data)
            repaired = None
            usable = tags is not None and len(tags) == len(rec.data)
            if self.config.checksums and usable and any(t.checksum for t in tags):
                res = fix_checksums(self.executor, self.ci, rec.data, tags)
                patch_all_checksums(self.ci)
                if res.data != rec.data:
                    repaired = res.data
                    if self.out_dir:
                        (self.out_dir / "crashes" / f"id_{idx:06d},fixed").write_bytes(repaired)
            replay = run_target(self.target, repaired or rec.data, (), Mode.LIGHT,
                                self.config.max_events)
            reproduces = replay.status == Status.CRASH
            self.crashes.append(CrashEntry(rec.data, repaired, rec.trace.error, reproduces))
            if repaired is not None and not reproduces:
                tr, interesting = self.executor.run_observed(repaired, self.patches(), STRUCTURE)
                if interesting:
                    self.add_entry(repaired, tr, TagArray(tags, derived=True), f"repaired-crash:{idx}")

    def _stats(self) -> dict:
        counts = self.ci.counts()
        return {
            "execs": self.executor.execs,
            "virtualMs": round(self.now_ms, 3),
            "queueSize": len(self.queue),
            "edges": self.coverage.edges_seen,
            "buckets": self.coverage.buckets_seen,
            "crashes": len(self.executor.crashes),
            "timeouts": self.executor.timeouts,
            "checksumsConfirmed": counts["confirmed"],
            "checksumsCandidate": counts["candidate"],
            "checksumsFP": counts["false-positive"],
        }

    def _write_stats(self) -> None:
        row = self._stats()
        self.stats_log.append(row)
        if self.out_dir:
            with open(self.out_dir / "stats.jsonl", "a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    # -- seeds and scheduling ----------------------------------------------------------

    def add_seeds(self, seeds) -> None:
        seen = set()
        for s in seeds:
            s = bytes(s)
            if not s or s in seen:
                continue
            seen.add(s)
            tr, _ = self.executor.run_observed(s, self.patches(), STRUCTURE)
            self._handle_crashes(None)
            if tr.status != Status.CRASH:
                self.add_entry(s, tr, None, "seed")
        if not self.queue:
            raise ValueError("no usable seed inputs")

    def _refresh_favored(self) -> None:
        best: dict[int, QueueEntry] = {}
        for e in self.queue:
            score = e.cost * len(e.data)
            for i in e.edges:
                cur = best.get(i)
                if cur is None or score < cur.cost * len(cur.data):
                    best[i] = e
        fav = {e.id for e in best.values()}
        for e in self.queue:
            e.favored = e.id in fav

    def schedule_next(self) -> tuple[QueueEntry, bool]:
        """Next entry to fuzz, favored entries first; non-favored ones are
        mostly skipped as in AFL's culling."""
        while True:
            if not self._cycle:
                self._refresh_favored()
                self._cycle = ([e for e in self.queue if e.favored]
                               + [e for e in self.queue if not e.favored])[::-1]
            entry = self._cycle.pop()
            if entry.favored or self._keep_unfavored(entry):
                return entry, self.wants_surgical(entry)

    def _keep_unfavored(self, entry: QueueEntry) -> bool:
        if any(e.favored and not e.times_fuzzed for e in self.queue):
            skip = SKIP_PENDING_FAV
        else:
            skip = SKIP_NFAV_OLD if entry.times_fuzzed else SKIP_NFAV_NEW
        return self.rng.random() >= skip

    def wants_surgical(self, entry: QueueEntry) -> bool:
        if entry.surgical or len(entry.data) > self.config.surgical_cap:
            return False
        if entry.provenance == "seed":
            return True
        p = surgical_probability(self.now_ms, self.last_interesting_ms, self.config.window_ms)
        return self.rng.random() < p

    def entry_energy(self, entry: QueueEntry) -> int:
        costs = [e.cost for e in self.queue]
        lens = [len(e.data) for e in self.queue]
        return energy(entry, statistics.median(costs), statistics.median(lens))

    # -- stages ---------------------------------------------------------------------

    def surgical_stage(self, entry: QueueEntry) -> list[QueueEntry]:
        data = entry.data
        if len(data) > self.config.surgical_cap:
            return []
        cfg = self.config
        ex = self.executor
        new: list[QueueEntry] = []
        ct, deps, discovered = get_deps(ex, data, self.patches(), cap=cfg.surgical_cap)
        for child, tr in discovered:
            new.append(self.add_entry(child, tr, None, f"bitflip:{entry.id}"))
        r = {}
        for s in sites_by_exec_order(ct):
            for j in range(len(ct[s].instances)):
                r[(s, j)] = detect_i2s(ct, deps, s, j, data)
                before = ct[s].addr in self.ci
                mark_checksums(r[(s, j)], deps, self.ci, ct, s, j)
                if cfg.checksums and not before and ct[s].addr in self.ci:
                    self.ci[ct[s].addr].patched = True
        local = []
        if cfg.operand_fuzz:
            for child, tr in fuzz_operands(ex, data, ct, deps, r, self.ci, self.patches(),
                                           self.rng, self.op_state):
                local.append(self.add_entry(child, tr, None, f"operands:{entry.id}"))
                self._tick()
        order = topological_sort(checksum_groups(ct, deps, r, self.ci, data), deps)
        tags = place_all_tags(deps, ct, self.ci, r, order, data)
        ok = True
        if cfg.checksums:
            res = fix_checksums(ex, self.ci, data, tags, order)
            patch_all_checksums(self.ci)
            data, ok = res.data, res.ok
            fp = {s for s, rec in ct.items() if rec.addr in self.ci and not self.ci.is_valid(rec.addr)}
            if fp:
                # repair just refuted these sites; their bytes are plain fields again
                tags = clear_checksum_flags(tags, fp)
                order = [g for g in order if g.site not in fp]
        for child in local:
            child.tags = derive_tags(tags, "operands", length=len(child.data))
        entry.data = data
        entry.tags = tags
        entry.order = order
        entry.surgical = True
        entry.repaired_ok = ok
        self._handle_crashes(tags)
        return new + local

    def _donors(self) -> list[tuple[bytes, TagArray]]:
        return [(e.data, e.tags) for e in self.queue if e.tags is not None]

    def structure_stage(self, entry: QueueEntry, children: int | None = None) -> list[QueueEntry]:
        cfg = self.config
        rng = self.rng
        new = []
        donors = self._donors() if cfg.struct_mutations else []
        n = self.entry_energy(entry) if children is None else children
        pr_field = cfg.pr_field if cfg.struct_mutations else 0.0
        pr_chunk = cfg.pr_chunk if cfg.struct_mutations else 0.0
        for _ in range(n):
            data, tags = entry.data, entry.tags
            for _ in range(rng.randint(1, cfg.max_stack)):
                step = choose_step(rng, pr_field, pr_chunk)
                if step == "field" and tags is not None:
                    data = field_mutation(tags, data, rng, cfg.pr_i2s)
                elif step == "chunk" and tags is not None:
                    m = chunk_mutation(data, tags, donors, rng, cfg.pr_chunk12, cfg.pr_extend)
                    if m is not None:
                        data, tags = m.data, m.tags
                else:
                    data, edit = havoc_mutate(data, rng)
                    if edit.delta:
                        tags = None
            tr, interesting = self.executor.run_observed(data, self.patches(), STRUCTURE)
            child_tags = TagArray(tags, derived=True) if tags is not None else None
            self._handle_crashes(child_tags)
            if interesting:
                new.append(self.add_entry(data, tr, child_tags, f"stack:{entry.id}"))
            self._tick()
        entry.times_fuzzed += 1
        return new

    # -- main loop -------------------------------------------------------------------

    def run(self, seeds=None) -> "Fuzzer":
        if self.config.seconds is not None:
            self._deadline = time.monotonic() + self.config.seconds
        try:
            if seeds is not None:
                self.add_seeds(seeds)
            if not self.queue:
                raise ValueError("no usable seed inputs")
            while True:
                entry, surgical = self.schedule_next()
                if surgical:
                    self.surgical_stage(entry)
                self._tick()
                self.structure_stage(entry)
        except BudgetExhausted:
            pass
        self._handle_crashes(None)
        self._write_stats()
        if self.out_dir:
            self.save()
        return self

    def save(self) -> None:
        out = self.out_dir
        for e in self.queue:
            name = f"id_{e.id:06d}"
            (out / "queue" / name).write_bytes(e.data)
            if e.tags is not None:
                tagio.save(out / "queue" / f"{name}.tags", e.tags)
        (out / "ci.txt").write_text(self.ci.to_text())


def reached_blocks(target: TargetAdapter, inputs, patches=()) -> set[int]:
    """Blocks visited by any of ``inputs`` on the (by default unpatched) target."""
    out: set[int] = set()
    for data in inputs:
        if data:
            out |= block_index_set(target, data, patches)
    return out
