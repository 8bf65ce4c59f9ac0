"""Reference targets.

Every target is a small parser written against :class:`~tagfuzz.target.Tracer`.
Block ids and comparison addresses are arbitrary distinct constants; only
their identity matters.

minipng layout (bit exact)::

    magic    89 4D 50 4E 47 0D 0A 1A        ("\\x89MPNG\\r\\n\\x1a")
    chunk*   length:u32be  type:4 ascii  data[length]  crc:u32be
             crc = CRC-32/ISO-HDLC over type + data

Parsing stops at the first ``IEND`` chunk; anything after it (the seed
carries a ``tRLR`` trailer chunk) is never read.

nestpng wraps a minipng chunk sequence in an outer checksum::

    magic 8 | body_len:u32be | body (minipng chunks) | outer_crc:u32be
    outer_crc = CRC-32 over body (which includes every inner chunk CRC)
"""

from __future__ import annotations

import struct
import zlib

from .target import Status, TargetAdapter, Tracer

OK, REJECT, CRASH = Status.OK, Status.REJECT, Status.CRASH


def _u16le(d: bytes, off: int) -> int:
    return d[off] | (d[off + 1] << 8)


def _u32be(d: bytes, off: int) -> int:
    return (d[off] << 24) | (d[off + 1] << 16) | (d[off + 2] << 8) | d[off + 3]


def _tag4(s: bytes) -> int:
    return struct.unpack(">I", s)[0]


# -- running example -----------------------------------------------------------

RX_CMP_A, RX_CMP_B, RX_CMP_C, RX_CMP_D = 0x4A10, 0x4B20, 0x4C30, 0x4D40
RX_ENTRY, RX_SHORT, RX_A_FAIL, RX_A_OK = 0x101, 0x102, 0x103, 0x104
RX_B_FAIL, RX_B_OK, RX_LOOP, RX_LOOP_END = 0x105, 0x106, 0x107, 0x108
RX_D_FAIL, RX_PROCESS = 0x109, 0x10A

RUNNING_EXAMPLE_SEED = bytes.fromhex("0E000200414136 0C".replace(" ", ""))


def running_example_checksum(data: bytes, offset: int) -> int:
    ck = 0
    for i in range(offset):
        ck ^= (data[i] << (i % 8)) & 0xFFFF
    return ck


def _running_example(t: Tracer, data: bytes, ck_width: int = 2) -> Status:
    """void parser(char* input, int len) with id/size/data/checksum fields."""
    t.block(RX_ENTRY)
    n = len(data)
    if n < 4 + ck_width:
        t.block(RX_SHORT)
        return REJECT
    ident = _u16le(data, 0)
    size = _u16le(data, 2)
    offset = 4
    if not t.cmp(RX_CMP_A, ident, 0xAAAA, 2, ident < 0xAAAA):
        t.block(RX_A_FAIL)
        return REJECT
    t.block(RX_A_OK)
    room = n - 4 - ck_width
    if not t.cmp(RX_CMP_B, size, room, 4, size <= room):
        t.block(RX_B_FAIL)
        return REJECT
    t.block(RX_B_OK)
    offset += size
    ck = 0
    i = 0
    while t.cmp(RX_CMP_C, i, offset, 4, i < offset, passing=None):
        t.block(RX_LOOP)
        ck ^= (data[i] << (i % 8)) & 0xFFFF
        i += 1
    t.block(RX_LOOP_END)
    if ck_width == 2:
        expected = _u16le(data, offset)
    else:
        ck = (ck ^ (ck >> 8)) & 0xFF
        expected = data[offset]
    if not t.cmp(RX_CMP_D, ck, expected, ck_width, ck == expected):
        t.block(RX_D_FAIL)
        return REJECT
    t.block(RX_PROCESS)
    return OK


def running_example(t: Tracer, data: bytes) -> Status:
    return _running_example(t, data, 2)


def running_example_ck8(t: Tracer, data: bytes) -> Status:
    """Same parser with a one-byte checksum (folded XOR)."""
    return _running_example(t, data, 1)


def running_example_ck8_checksum(data: bytes, offset: int) -> int:
    ck = running_example_checksum(data, offset)
    return (ck ^ (ck >> 8)) & 0xFF


# -- bytewise magic -------------------------------------------------------------

BM_GET = 0x5100
BM_BYTE = (0x5210, 0x5220, 0x5230, 0x5240)
BM_CALL_IHDR, BM_CALL_IEND = 0x77A1, 0x77B2
BM_ENTRY, BM_SHORT, BM_GET_OK, BM_GET_NO = 0x201, 0x202, 0x203, 0x204
BM_STEP = (0x210, 0x211, 0x212, 0x213)
BM_MAGIC_OK, BM_IEND_OK, BM_NONE = 0x220, 0x221, 0x222


def chunk_type_equals(t: Tracer, chunk: bytes, type_: bytes) -> bool:
    """lodepng-style: one comparison per byte, short-circuit."""
    for k in range(4):
        if not t.cmp(BM_BYTE[k], chunk[4 + k], type_[k], 1, chunk[4 + k] == type_[k]):
            return False
        t.block(BM_STEP[k])
    return True


def bytewise_magic(t: Tracer, data: bytes) -> Status:
    t.block(BM_ENTRY)
    if len(data) < 8:
        t.block(BM_SHORT)
        return REJECT
    if t.memcmp(BM_GET, data[:4], b"GET ", 4):
        t.block(BM_GET_OK)
    else:
        t.block(BM_GET_NO)
    with t.frame(BM_CALL_IHDR):
        ihdr = chunk_type_equals(t, data, b"IHDR")
    if ihdr:
        t.block(BM_MAGIC_OK)
        return OK
    with t.frame(BM_CALL_IEND):
        iend = chunk_type_equals(t, data, b"IEND")
    t.block(BM_IEND_OK if iend else BM_NONE)
    return OK


# -- minipng --------------------------------------------------------------------

PNG_MAGIC = b"\x89MPNG\r\n\x1a"

MP_MAGIC, MP_LEN, MP_CRC = 0x6100, 0x6200, 0x6300
MP_T_IHDR, MP_T_TEXT, MP_T_IDAT, MP_T_IEND = 0x6410, 0x6420, 0x6430, 0x6440
MP_W0, MP_WMAGIC, MP_DEPTH, MP_COLOR, MP_KEYWORD = 0x6510, 0x6520, 0x6530, 0x6540, 0x6550
MP_SEEN_IHDR = 0x6560

MB_ENTRY, MB_BADMAGIC, MB_HDR_OK, MB_TRUNC = 0x301, 0x302, 0x303, 0x304
MB_LEN_BAD, MB_CRC_BAD, MB_CRC_OK, MB_IHDR = 0x305, 0x306, 0x307, 0x308
MB_TEXT, MB_IDAT, MB_IEND, MB_UNKNOWN = 0x309, 0x30A, 0x30B, 0x30C
MB_W_ZERO, MB_W_OK, MB_DEEP_W, MB_DEPTH_BAD = 0x30D, 0x30E, 0x30F, 0x310
MB_DEEP_PAL, MB_COLOR_OTHER, MB_DEEP_TXT, MB_TXT_OTHER = 0x311, 0x312, 0x313, 0x314
MB_NO_IHDR, MB_DONE = 0x315, 0x316
MB_NESTED = 0x317

MINIPNG_DEEP = (MB_DEEP_W, MB_DEEP_PAL)


def png_chunk(ctype: bytes, data: bytes) -> bytes:
    return (struct.pack(">I", len(data)) + ctype + data
            + struct.pack(">I", zlib.crc32(ctype + data)))


def minipng_seed() -> bytes:
    ihdr = struct.pack(">IIBBBBB", 16, 16, 8, 2, 0, 0, 0)
    return (PNG_MAGIC + png_chunk(b"IHDR", ihdr)
            + png_chunk(b"tEXt", b"Title\0tiny")
            + png_chunk(b"IDAT", bytes(range(0x10, 0x1C)))
            + png_chunk(b"IEND", b"")
            + png_chunk(b"tRLR", b"trailer!"))


def _process_ihdr(t: Tracer, d: bytes) -> Status:
    if len(d) < 13:
        return REJECT
    width = _u32be(d, 0)
    depth, color = d[8], d[9]
    if not t.cmp(MP_W0, width, 0, 4, width != 0):
        t.block(MB_W_ZERO)
        return REJECT
    t.block(MB_W_OK)
    if t.cmp(MP_WMAGIC, width, 0x1337, 4, width == 0x1337, passing=None):
        t.block(MB_DEEP_W)
    if not t.cmp(MP_DEPTH, depth, 16, 1, depth <= 16):
        t.block(MB_DEPTH_BAD)
        return REJECT
    if t.cmp(MP_COLOR, color, 3, 1, color == 3, passing=None):
        t.block(MB_DEEP_PAL)
        if depth == 16:
            # palette of 2**16 entries overruns the fixed table
            return CRASH
    else:
        t.block(MB_COLOR_OTHER)
    return OK


def _parse_chunks(t: Tracer, data: bytes, off: int, end: int) -> Status:
    seen_ihdr = False
    while True:
        if off + 12 > end:
            t.block(MB_TRUNC)
            return REJECT
        length = _u32be(data, off)
        room = end - off - 12
        if not t.cmp(MP_LEN, length, room, 4, length <= room):
            t.block(MB_LEN_BAD)
            return REJECT
        ctype = data[off + 4:off + 8]
        body = data[off + 8:off + 8 + length]
        stored = _u32be(data, off + 8 + length)
        computed = zlib.crc32(ctype + body)
        if not t.cmp(MP_CRC, computed, stored, 4, computed == stored):
            t.block(MB_CRC_BAD)
            return REJECT
        t.block(MB_CRC_OK)
        tv = _tag4(ctype)
        if t.cmp(MP_T_IHDR, tv, _tag4(b"IHDR"), 4, tv == _tag4(b"IHDR"), passing=None):
            t.block(MB_IHDR)
            st = _process_ihdr(t, body)
            if st != OK:
                return st
            seen_ihdr = True
        elif t.cmp(MP_T_TEXT, tv, _tag4(b"tEXt"), 4, tv == _tag4(b"tEXt"), passing=None):
            t.block(MB_TEXT)
            if t.memcmp(MP_KEYWORD, body, b"Comment\0", 8, passing=None):
                t.block(MB_DEEP_TXT)
            else:
                t.block(MB_TXT_OTHER)
        elif t.cmp(MP_T_IDAT, tv, _tag4(b"IDAT"), 4, tv == _tag4(b"IDAT"), passing=None):
            t.block(MB_IDAT)
            if not t.cmp(MP_SEEN_IHDR, int(seen_ihdr), 1, 1, seen_ihdr, passing=None):
                t.block(MB_NO_IHDR)
                return REJECT
        elif t.cmp(MP_T_IEND, tv, _tag4(b"IEND"), 4, tv == _tag4(b"IEND"), passing=None):
            t.block(MB_IEND)
            return OK
        else:
            t.block(MB_UNKNOWN)
        off += 12 + length


def minipng(t: Tracer, data: bytes) -> Status:
    t.block(MB_ENTRY)
    if len(data) < 8 or not t.memcmp(MP_MAGIC, data[:8], PNG_MAGIC, 8):
        t.block(MB_BADMAGIC)
        return REJECT
    t.block(MB_HDR_OK)
    st = _parse_chunks(t, data, 8, len(data))
    if st == OK:
        t.block(MB_DONE)
    return st


# -- nestpng (two-level checksum) -------------------------------------------------

NP_OUTER, NP_BODYLEN = 0x7100, 0x7200


def nestpng_seed() -> bytes:
    body = (png_chunk(b"IHDR", struct.pack(">IIBBBBB", 4, 4, 8, 2, 0, 0, 0))
            + png_chunk(b"IDAT", b"\x01\x02\x03\x04")
            + png_chunk(b"IEND", b""))
    return (PNG_MAGIC + struct.pack(">I", len(body)) + body
            + struct.pack(">I", zlib.crc32(body)))


def nestpng(t: Tracer, data: bytes) -> Status:
    t.block(MB_ENTRY)
    if len(data) < 16 or not t.memcmp(MP_MAGIC, data[:8], PNG_MAGIC, 8):
        t.block(MB_BADMAGIC)
        return REJECT
    blen = _u32be(data, 8)
    room = len(data) - 16
    if not t.cmp(NP_BODYLEN, blen, room, 4, blen <= room):
        t.block(MB_LEN_BAD)
        return REJECT
    body_end = 12 + blen
    computed = zlib.crc32(data[12:body_end])
    stored = _u32be(data, body_end)
    if not t.cmp(NP_OUTER, computed, stored, 4, computed == stored):
        t.block(MB_CRC_BAD)
        return REJECT
    t.block(MB_NESTED)
    st = _parse_chunks(t, data, 12, body_end)
    if st == OK:
        t.block(MB_DONE)
    return st


# -- multiformat ------------------------------------------------------------------

MF_MAGIC_A, MF_MAGIC_B, MF_LEN, MF_VER = 0x8100, 0x8200, 0x8300, 0x8400
MF_ENTRY, MF_A, MF_B, MF_BAD = 0x401, 0x402, 0x403, 0x404
MF_LEN_OK, MF_VER_OK, MF_FAIL = 0x405, 0x406, 0x407


def _check_len(t: Tracer, data: bytes) -> bool:
    n = data[2]
    ok = t.cmp(MF_LEN, n, len(data) - 4, 1, n <= len(data) - 4)
    t.block(MF_LEN_OK if ok else MF_FAIL)
    return ok


def _check_ver(t: Tracer, data: bytes) -> bool:
    v = data[3]
    ok = t.cmp(MF_VER, v, 2, 1, v == 2)
    t.block(MF_VER_OK if ok else MF_FAIL)
    return ok


def multiformat(t: Tracer, data: bytes) -> Status:
    """Dispatch on a 2-byte magic; the two parsers share inlined checks in opposite order."""
    t.block(MF_ENTRY)
    if len(data) < 4:
        return REJECT
    magic = _u16le(data, 0)
    if t.cmp(MF_MAGIC_A, magic, 0x4641, 2, magic == 0x4641, passing=None):  # "AF"
        t.block(MF_A)
        if not _check_len(t, data) or not _check_ver(t, data):
            return REJECT
        return OK
    if t.cmp(MF_MAGIC_B, magic, 0x4642, 2, magic == 0x4642, passing=None):  # "BF"
        t.block(MF_B)
        if not _check_ver(t, data) or not _check_len(t, data):
            return REJECT
        return OK
    t.block(MF_BAD)
    return REJECT


# -- small probes used by tests --------------------------------------------------

PO_SIZE, PO_CONST = 0x9100, 0x9200
PO_ENTRY, PO_HIT, PO_MISS = 0x501, 0x502, 0x503


def plus_one(t: Tracer, data: bytes) -> Status:
    """Compares size+1 (so the operand is the input field plus one) and a constant pair."""
    t.block(PO_ENTRY)
    if len(data) < 4:
        return REJECT
    t.cmp(PO_CONST, 5, 5, 4, True, passing=None)
    size = _u16le(data, 0) + 1
    if t.cmp(PO_SIZE, size, 0x300, 4, size == 0x300, passing=None):
        t.block(PO_HIT)
    else:
        t.block(PO_MISS)
    return OK


LG_LEN, LG_FIELD = 0xA100, 0xA200
LG_ENTRY, LG_SHORT, LG_OK = 0x601, 0x602, 0x603


def length_guard(t: Tracer, data: bytes) -> Status:
    """Byte 0 is a count; bytes 1..count are each compared in a loop at one site."""
    t.block(LG_ENTRY)
    count = data[0]
    if not t.cmp(LG_LEN, count, len(data) - 1, 1, count <= len(data) - 1):
        t.block(LG_SHORT)
        return REJECT
    for i in range(count):
        t.cmp(LG_FIELD, data[1 + i], 0x7F, 1, data[1 + i] < 0x7F, passing=None)
    t.block(LG_OK)
    return OK


def _registry() -> dict[str, TargetAdapter]:
    targets = [
        TargetAdapter("running_example", running_example,
                      "id/size/data/XOR-checksum parser", (RX_PROCESS,),
                      [RUNNING_EXAMPLE_SEED]),
        TargetAdapter("bytewise_magic", bytewise_magic,
                      "4-byte type checked one byte per comparison + GET memcmp",
                      (BM_MAGIC_OK,), [b"0" * 72]),
        TargetAdapter("minipng", minipng, "PNG-like chunks with CRC-32",
                      MINIPNG_DEEP, [minipng_seed()]),
        TargetAdapter("multiformat", multiformat, "two parsers behind a magic dispatcher",
                      (MF_VER_OK,), [b"AF\x00\x02", b"BF\x00\x02"]),
        TargetAdapter("nestpng", nestpng, "minipng body wrapped by an outer CRC-32",
                      (MB_DONE,), [nestpng_seed()]),
        TargetAdapter("running_example_ck8", running_example_ck8,
                      "running example with a one-byte checksum", (RX_PROCESS,)),
        TargetAdapter("plus_one", plus_one, "size+1 comparison", (PO_HIT,),
                      [b"\x10\x00\x00\x00"]),
        TargetAdapter("length_guard", length_guard, "count-prefixed loop", (LG_OK,),
                      [b"\x03abc"]),
    ]
    return {t.name: t for t in targets}


REGISTRY = _registry()


def register_reference_targets() -> list[TargetAdapter]:
    return list(REGISTRY.values())


def get_target(name: str) -> TargetAdapter:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
