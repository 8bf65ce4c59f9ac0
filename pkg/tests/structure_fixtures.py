"""Synthetic tag layouts shared by unit and acceptance tests."""

from tagfuzz.tags import Tag, UNTAGGED

CK, TY, X, Y, UNREL, NEXT = 0x0C0C, 0x0707, 0x0A0A, 0x0B0B, 0x0D0D, 0x0E0E


def run(site, ts, n, parent=0, checksum=False):
    return [Tag(site, ts, parent, checksum=checksum)] * n


def field_single(k=2):
    """One comparison over a 4-byte field, preceded and followed by unrelated bytes."""
    return run(0x10, 3, k) + run(0x20, 9, 4) + run(0x30, 2, 3), k, k + 3


def field_per_byte(k=1):
    """Four different sites with timestamps 5, 6, 7, 8."""
    body = [Tag(0xA, 5), Tag(0xE, 6), Tag(0x6, 7), Tag(0xB, 8)]
    return run(0x30, 1, k) + body + run(0x40, 2, 2), k, k + 3


def field_combined(k=0):
    """Two same-tag runs whose timestamps differ by one."""
    return run(0xA, 5, 2) + run(0xB, 6, 2) + run(0xC, 9, 1), k, k + 3


def field_depth_cap(segments=12):
    """Single-byte segments with consecutive timestamps; recursion stops at depth 8."""
    return [Tag(0x100 + i, 1 + i) for i in range(segments)], 0, 8


# Chunk variants. The program checks cksm first (ts 1), then type (ts 2),
# then x (ts 3), unrelated code (ts 4), then y (ts 5).

def chunk_parent_cksum():
    tags = (run(TY, 2, 4, CK) + run(X, 3, 4, TY) + run(Y, 5, 4, UNREL)
            + run(CK, 1, 4, 0, True) + run(TY, 2, 4, CK))
    return tags, 0, 15


def chunk_extend_xy():
    tags = (run(TY, 2, 4, CK) + run(CK, 1, 4, 0, True) + run(X, 3, 4, TY) + run(Y, 5, 4, UNREL)
            + run(NEXT, 2, 4, CK))
    # extension off stops after cksm; extension on reaches y through the second recursion
    return tags, 0, 7, 15


def chunk_blob():
    tags = (run(TY, 2, 4, CK) + run(X, 3, 4, TY) + run(Y, 5, 4, UNREL) + run(CK, 1, 4, 0, True)
            + [UNTAGGED] * 64 + run(NEXT, 2, 4, CK))
    return tags, 0, 15, 79
