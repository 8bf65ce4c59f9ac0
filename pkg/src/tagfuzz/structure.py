"""Field and chunk inference from tags, and the mutations built on them."""

from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass

from .havoc import mutate_range
from .tags import Tag, TagArray, derive_tags

PR_I2S = 0.1
PR_EXTEND = 0.5
PR_CHUNK12 = 0.75
MAX_FIELD_DEPTH = 8


@dataclass(frozen=True)
class FieldSpan:
    start: int
    end: int


@dataclass(frozen=True)
class ChunkSpan:
    start: int
    end: int
    lead_tag: int
    lead_parent: int

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass
class ChunkMutation:
    data: bytes
    tags: TagArray | None
    kind: str
    span: ChunkSpan


def go_right_while_same_tag(tags: Sequence[Tag], k: int) -> int:
    t = tags[k]
    n = len(tags)
    while t.id and k + 1 < n and tags[k + 1].same(t):
        k += 1
    return k


def go_left_while_same_tag(tags: Sequence[Tag], k: int) -> int:
    t = tags[k]
    while t.id and k > 0 and tags[k - 1].same(t):
        k -= 1
    return k


def find_field_end(tags: Sequence[Tag], k: int, depth: int = 0) -> int:
    end = go_right_while_same_tag(tags, k)
    if depth < MAX_FIELD_DEPTH and end + 1 < len(tags):
        nxt = tags[end + 1]
        if nxt.id and nxt.ts == tags[k].ts + 1:
            end = find_field_end(tags, end + 1, depth + 1)
    return end


def fields(tags: Sequence[Tag]) -> list[FieldSpan]:
    """Sweep left to right, restarting after each found field."""
    out = []
    b, n = 0, len(tags)
    while b < n:
        if not tags[b].id:
            b += 1
            continue
        e = find_field_end(tags, b)
        out.append(FieldSpan(b, e))
        b = e + 1
    return out


def pick_field(tags: Sequence[Tag], b: int, rng: random.Random, pr_i2s: float = PR_I2S) -> FieldSpan | None:
    """Field chosen from start position ``b``; None when nothing right of ``b`` qualifies."""
    for i in range(b, len(tags)):
        if not tags[i].id:
            continue
        start = go_left_while_same_tag(tags, i)
        if rng.random() < pr_i2s or not tags[start].i2s:
            return FieldSpan(start, find_field_end(tags, start))
    return None


def field_mutation(tags: Sequence[Tag], data: bytes, rng: random.Random,
                   pr_i2s: float = PR_I2S) -> bytes:
    if not data or not tags:
        return data
    span = pick_field(tags, rng.randrange(len(data)), rng, pr_i2s)
    if span is None:
        return data
    out, _ = mutate_range(data, span.start, span.end, rng)
    return out


def find_chunk_end(tags: Sequence[Tag], k: int, rng: random.Random | None = None,
                   pr_extend: float = PR_EXTEND) -> int:
    """End of the chunk whose leading field starts at ``k``.

    Untagged bytes carry ts 0 and so never pass the timestamp tests; they are
    only swallowed by the probabilistic extension.
    """
    rng = rng or random.Random(0)
    n = len(tags)
    tk = tags[k]
    end = go_right_while_same_tag(tags, k)
    while end + 1 < n and tags[end + 1].ts > tk.ts:
        end = find_chunk_end(tags, end + 1, rng, pr_extend)
    while tk.parent and end + 1 < n and tags[end + 1].id == tk.parent:
        end += 1
    if rng.random() < pr_extend:
        while end + 1 < n and tags[end + 1].id == 0:
            end += 1
        while end + 1 < n and tags[end + 1].ts > tk.ts:
            end = find_chunk_end(tags, end + 1, rng, pr_extend)
    return end


def _span(tags, start, end) -> ChunkSpan:
    t = tags[start]
    return ChunkSpan(start, end, t.id, t.parent)


def search_tag_right(tags: Sequence[Tag], start: int, tag_id: int) -> int:
    for i in range(start, len(tags)):
        if tags[i].id == tag_id:
            return i
    return len(tags)


def chunks_with_id(tags: Sequence[Tag], tag_id: int, rng: random.Random,
                   pr_extend: float = PR_EXTEND) -> list[ChunkSpan]:
    out = []
    start = 0
    while start < len(tags):
        start = search_tag_right(tags, start, tag_id)
        if start >= len(tags):
            break
        end = find_chunk_end(tags, start, rng, pr_extend)
        out.append(_span(tags, start, end))
        start = end + 1
    return out


def get_random_chunk(tags: Sequence[Tag], rng: random.Random, pr_chunk12: float = PR_CHUNK12,
                     pr_extend: float = PR_EXTEND) -> ChunkSpan | None:
    """A plausible chunk, or None when no byte is tagged."""
    ids = sorted({t.id for t in tags if t.id})
    if not ids:
        return None
    if rng.random() < pr_chunk12:
        k = rng.randrange(len(tags))
        n = len(tags)
        # an untagged pick moves to the next tagged byte, wrapping around
        while not tags[k].id:
            k = (k + 1) % n
        start = go_left_while_same_tag(tags, k)
        return _span(tags, start, find_chunk_end(tags, k, rng, pr_extend))
    return rng.choice(chunks_with_id(tags, rng.choice(ids), rng, pr_extend))


# -- chunk mutations --------------------------------------------------------------------

Donor = tuple  # (bytes, TagArray)

DONOR_TRIES = 8


def _run_starts(tags: Sequence[Tag], pred) -> list[int]:
    return [i for i, t in enumerate(tags)
            if t.id and pred(t) and (i == 0 or not tags[i - 1].same(t))]


def _donor_chunk(donors: Sequence[Donor], pred, rng, pr_extend) -> tuple[bytes, list[Tag]] | None:
    if not donors:
        return None
    for _ in range(DONOR_TRIES):
        d_data, d_tags = donors[rng.randrange(len(donors))]
        if not d_tags:
            continue
        starts = _run_starts(d_tags, pred)
        if not starts:
            continue
        s = rng.choice(starts)
        e = find_chunk_end(d_tags, s, rng, pr_extend)
        return d_data[s:e + 1], list(d_tags[s:e + 1])
    return None


def chunk_addition(data: bytes, tags: TagArray, span: ChunkSpan, donors: Sequence[Donor],
                   rng: random.Random, pr_extend: float = PR_EXTEND) -> ChunkMutation | None:
    if not span.lead_parent:
        return None
    got = _donor_chunk(donors, lambda t: t.parent == span.lead_parent, rng, pr_extend)
    if got is None:
        return None
    block, block_tags = got
    at = span.start if rng.random() < 0.5 else span.end + 1
    out = data[:at] + block + data[at:]
    return ChunkMutation(out, derive_tags(tags, "add", start=at, donor=block_tags, length=len(out)),
                         "add", span)


def chunk_deletion(data: bytes, tags: TagArray, span: ChunkSpan) -> ChunkMutation | None:
    out = data[:span.start] + data[span.end + 1:]
    if not out:
        return None
    return ChunkMutation(out, derive_tags(tags, "delete", start=span.start, end=span.end,
                                          length=len(out)), "delete", span)


def chunk_splicing(data: bytes, tags: TagArray, span: ChunkSpan, donors: Sequence[Donor],
                   rng: random.Random, pr_extend: float = PR_EXTEND) -> ChunkMutation | None:
    got = _donor_chunk(donors, lambda t: t.id == span.lead_tag, rng, pr_extend)
    if got is None:
        return None
    block, block_tags = got
    out = data[:span.start] + block + data[span.end + 1:]
    return ChunkMutation(out, derive_tags(tags, "splice", start=span.start, end=span.end,
                                          donor=block_tags, length=len(out)), "splice", span)


def chunk_mutation(data: bytes, tags: TagArray, donors: Sequence[Donor], rng: random.Random,
                   pr_chunk12: float = PR_CHUNK12, pr_extend: float = PR_EXTEND) -> ChunkMutation | None:
    """Pick a chunk and one of addition, deletion or splicing uniformly."""
    span = get_random_chunk(tags, rng, pr_chunk12, pr_extend)
    if span is None:
        return None
    kind = rng.randrange(3)
    if kind == 0:
        return chunk_addition(data, tags, span, donors, rng, pr_extend)
    if kind == 1:
        return chunk_deletion(data, tags, span)
    return chunk_splicing(data, tags, span, donors, rng, pr_extend)
