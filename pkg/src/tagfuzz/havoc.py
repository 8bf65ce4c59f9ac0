"""AFL-style random mutations."""

from __future__ import annotations

import random
from dataclasses import dataclass

INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
INTERESTING_16 = INTERESTING_8 + (-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767)
INTERESTING_32 = INTERESTING_16 + (-2147483648, -100663046, -32769, 32768, 65535, 65536,
                                   100663045, 2147483647)
ARITH_MAX = 35

HAVOC_KINDS = (
    "bitflip", "byteflip", "interesting8", "interesting16", "interesting32",
    "arith8", "arith16", "arith32", "random-byte", "delete-range", "clone-range",
    "overwrite-range", "swap",
)


@dataclass(frozen=True)
class Edit:
    """What one mutation did; ``delta`` bytes were inserted (>0) or removed (<0) at ``pos``."""

    kind: str
    pos: int = 0
    delta: int = 0


def _width(rng: random.Random, span: int, w: int) -> int:
    while w > 1 and w > span:
        w //= 2
    return w


def _put(buf: bytearray, pos: int, value: int, w: int, big: bool) -> None:
    buf[pos:pos + w] = (value & ((1 << (8 * w)) - 1)).to_bytes(w, "big" if big else "little")


def _get(buf: bytearray, pos: int, w: int, big: bool) -> int:
    return int.from_bytes(buf[pos:pos + w], "big" if big else "little")


# -- length-preserving operations on buf[lo..hi] (inclusive) ------------------------------

def op_bitflip(buf, lo, hi, rng):
    pos = rng.randint(lo, hi)
    buf[pos] ^= 1 << rng.randrange(8)


def op_byteflip(buf, lo, hi, rng):
    buf[rng.randint(lo, hi)] ^= 0xFF


def op_random_byte(buf, lo, hi, rng):
    pos = rng.randint(lo, hi)
    buf[pos] ^= rng.randint(1, 255)


def _interesting(w, table):
    def op(buf, lo, hi, rng):
        ww = _width(rng, hi - lo + 1, w)
        pos = rng.randint(lo, hi - ww + 1)
        vals = table if ww == w else (INTERESTING_8, INTERESTING_16, INTERESTING_32)[ww.bit_length() - 1]
        _put(buf, pos, rng.choice(vals), ww, rng.random() < 0.5)
    return op


def _arith(w):
    def op(buf, lo, hi, rng):
        ww = _width(rng, hi - lo + 1, w)
        pos = rng.randint(lo, hi - ww + 1)
        big = rng.random() < 0.5
        d = rng.randint(1, ARITH_MAX) * (1 if rng.random() < 0.5 else -1)
        _put(buf, pos, _get(buf, pos, ww, big) + d, ww, big)
    return op


def op_swap2(buf, lo, hi, rng):
    if hi == lo:
        buf[lo] = ((buf[lo] << 4) | (buf[lo] >> 4)) & 0xFF
        return
    pos = rng.randint(lo, hi - 1)
    buf[pos], buf[pos + 1] = buf[pos + 1], buf[pos]


def op_shuffle(buf, lo, hi, rng):
    seg = list(buf[lo:hi + 1])
    rng.shuffle(seg)
    buf[lo:hi + 1] = bytes(seg)


def op_reverse(buf, lo, hi, rng):
    buf[lo:hi + 1] = buf[lo:hi + 1][::-1]


FIELD_OPS = {
    "bitflip": op_bitflip,
    "byteflip": op_byteflip,
    "random-byte": op_random_byte,
    "interesting8": _interesting(1, INTERESTING_8),
    "interesting16": _interesting(2, INTERESTING_16),
    "interesting32": _interesting(4, INTERESTING_32),
    "arith8": _arith(1),
    "arith16": _arith(2),
    "arith32": _arith(4),
    "swap2": op_swap2,
    "shuffle": op_shuffle,
    "reverse": op_reverse,
}


def mutate_range(data: bytes | bytearray, lo: int, hi: int, rng: random.Random,
                 kind: str | None = None) -> tuple[bytes, str]:
    """Apply one length-preserving transformation confined to ``data[lo..hi]``."""
    kind = kind or rng.choice(tuple(FIELD_OPS))
    buf = bytearray(data)
    FIELD_OPS[kind](buf, lo, hi, rng)
    return bytes(buf), kind


# -- havoc -----------------------------------------------------------------------

def _block_len(rng: random.Random, limit: int) -> int:
    return rng.randint(1, max(1, min(limit, 32 if rng.random() < 0.75 else 256)))


def havoc_mutate(data: bytes, rng: random.Random, kind: str | None = None) -> tuple[bytes, Edit]:
    """One random havoc step. The result is never empty."""
    if not data:
        raise ValueError("havoc needs at least one byte")
    kind = kind or rng.choice(HAVOC_KINDS)
    n = len(data)
    if kind in FIELD_OPS:
        out, _ = mutate_range(data, 0, n - 1, rng, kind)
        return out, Edit(kind)
    buf = bytearray(data)
    if kind == "swap":
        op_swap2(buf, 0, n - 1, rng)
        return bytes(buf), Edit(kind)
    if kind == "delete-range":
        if n < 2:
            return bytes(buf), Edit(kind)
        length = _block_len(rng, n - 1)
        pos = rng.randint(0, n - length)
        del buf[pos:pos + length]
        return bytes(buf), Edit(kind, pos, -length)
    if kind == "clone-range":
        pos = rng.randint(0, n)
        if rng.random() < 0.75:
            length = _block_len(rng, n)
            src = rng.randint(0, n - length)
            block = buf[src:src + length]
        else:
            length = _block_len(rng, 256)
            block = bytes([rng.randrange(256)]) * length
        buf[pos:pos] = block
        return bytes(buf), Edit(kind, pos, length)
    if kind == "overwrite-range":
        length = _block_len(rng, n)
        dst = rng.randint(0, n - length)
        if rng.random() < 0.75:
            src = rng.randint(0, n - length)
            buf[dst:dst + length] = bytes(buf[src:src + length])
        else:
            buf[dst:dst + length] = bytes([rng.randrange(256)]) * length
        return bytes(buf), Edit(kind)
    raise ValueError(f"unknown havoc kind {kind}")


def delete_range(data: bytes, pos: int, length: int) -> bytes:
    """Deterministic deletion, clamped so at least one byte survives."""
    n = len(data)
    length = max(0, min(length, n - pos, n - 1))
    return data[:pos] + data[pos + length:]
