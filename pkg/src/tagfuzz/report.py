"""Textual structure report: inferred fields, checksum bytes and chunk spans."""

from __future__ import annotations

import random

from .fuzzer import Config, Fuzzer
from .structure import fields, find_chunk_end
from .tags import TagArray
from .target import TargetAdapter


def analyze(target: TargetAdapter, data: bytes, passes: int = 1,
            config: Config | None = None) -> tuple[bytes, TagArray, Fuzzer]:
    """Surgical passes over ``data``; later passes benefit from learned patches."""
    cfg = config or Config(budget=10**9, operand_fuzz=False)
    fz = Fuzzer(target, cfg)
    fz.add_seeds([data])
    entry = fz.queue[0]
    for _ in range(max(1, passes)):
        entry.surgical = False
        fz.surgical_stage(entry)
    return entry.data, entry.tags, fz


def structure(data: bytes, tags: TagArray, ct_addr: dict[int, int] | None = None) -> dict:
    addr = ct_addr or {}
    out_fields = []
    for f in fields(tags):
        t = tags[f.start]
        ck = any(tags[b].checksum for b in range(f.start, f.end + 1))
        out_fields.append({
            "start": f.start, "end": f.end, "site": t.id,
            "addr": addr.get(t.id, 0), "checksum": ck,
            "bytes": data[f.start:f.end + 1].hex(),
        })
    chunks = []
    seen = set()
    rng = random.Random(0)
    for f in out_fields:
        span = (f["start"], find_chunk_end(tags, f["start"], rng, pr_extend=0.0))
        if span not in seen:
            seen.add(span)
            chunks.append({"start": span[0], "end": span[1]})
    covered = set()
    for f in out_fields:
        covered.update(range(f["start"], f["end"] + 1))
    unidentified = [b for b in range(len(data)) if b not in covered]
    return {"length": len(data), "fields": out_fields, "chunks": chunks,
            "unidentified": _ranges(unidentified),
            "checksum_bytes": [b for b, t in enumerate(tags) if t.checksum]}


def _ranges(pos: list[int]) -> list[list[int]]:
    out: list[list[int]] = []
    for p in pos:
        if out and out[-1][1] == p - 1:
            out[-1][1] = p
        else:
            out.append([p, p])
    return out


def render(rep: dict) -> str:
    if not rep["fields"]:
        return "no fields identified\n"
    lines = []
    spans = []
    for f in rep["fields"]:
        label = f"{f['start']}-{f['end']} {f['addr']:#x}" if f["addr"] else f"{f['start']}-{f['end']} {f['site']:04x}"
        spans.append(f"[{label}{' ✓' if f['checksum'] else ''}]")
    lines.append("fields:  " + "".join(spans))
    lines.append("bytes:   " + " ".join(f"[{f['bytes']}]" for f in rep["fields"]))
    ck = set(rep["checksum_bytes"])
    if ck:
        lines.append("checksum bytes: " + ", ".join(f"{a}-{b}" for a, b in _ranges(sorted(ck))))
    if rep["unidentified"]:
        lines.append("unidentified: " + ", ".join(f"{a}-{b}" for a, b in rep["unidentified"]))
    lines.append("chunks:  " + " ".join(f"[{c['start']}-{c['end']}]" for c in rep["chunks"]))
    return "\n".join(lines) + "\n"


def hexdump(data: bytes, tags: TagArray, width: int = 16) -> str:
    """Hex rows with checksum-field bytes underlined by carets."""
    rows = []
    for off in range(0, len(data), width):
        chunk = data[off:off + width]
        rows.append(f"{off:06x}  " + " ".join(f"{b:02x}" for b in chunk))
        marks = "".join("^^ " if tags[off + i].checksum else "   " for i in range(len(chunk)))
        if marks.strip():
            rows.append(" " * 8 + marks.rstrip())
    return "\n".join(rows) + "\n"
