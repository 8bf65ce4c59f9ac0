import pytest

from tagfuzz.cmplog import build_ct
from tagfuzz.deps import DepsMap
from tagfuzz.i2s import ChecksumIndex
from tagfuzz.report import analyze
from tagfuzz.tags import (F_CHECKSUM, F_I2S, F_OP2, REASSIGN_MIN_DEPS, Tag, TagArray, UNTAGGED,
                          derive_tags, dumps, load, loads, place_all_tags, place_tags, save)
from tagfuzz.target import CmpEvent
from tagfuzz.targets import RUNNING_EXAMPLE_SEED, RX_CMP_A, RX_CMP_B, RX_CMP_D, get_target

S1, S2 = 0x1111, 0x2222


def _two_site_fixture(n_prev, n, length=12):
    ct = build_ct([CmpEvent(S1, 0, 4, b"\0" * 4, b"\1" * 4), CmpEvent(S2, 0, 4, b"\0" * 4, b"\1" * 4)])
    deps = DepsMap(length, ct)
    deps[(S1, 0, 0)][:n_prev] = True
    deps[(S2, 0, 0)][:n] = True
    return place_all_tags(deps, ct, ChecksumIndex(), {}, [], b"\0" * length)


def ref_reassign(n_prev, n):
    return n_prev > 4 and n < n_prev


@pytest.mark.parametrize("n_prev", range(1, 11))
@pytest.mark.parametrize("n", range(1, 11))
def test_reassignment_rule(n_prev, n):
    tags = _two_site_fixture(n_prev, n)
    want = S2 if ref_reassign(n_prev, n) else S1
    assert tags[0].id == want
    if n > n_prev:
        # bytes only the later site reads are untagged before it runs
        assert tags[n - 1].id == S2


def test_reassignment_examples():
    assert _two_site_fixture(6, 3)[0].id == S2
    assert _two_site_fixture(6, 5)[0].id == S2
    assert _two_site_fixture(REASSIGN_MIN_DEPS, 1)[0].id == S1


def test_zero_deps_leave_tags_unchanged():
    ct = build_ct([CmpEvent(S1, 0, 4, b"\0" * 4, b"\1" * 4)])
    deps = DepsMap(4, ct)
    tags = TagArray.empty(4)
    place_tags(tags, deps, S1, ct, ChecksumIndex(), {}, [], b"\0" * 4)
    assert list(tags) == [UNTAGGED] * 4


def test_running_example_tag_assignment():
    _, tags, _ = analyze(get_target("running_example"), RUNNING_EXAMPLE_SEED)
    assert [t.id for t in tags] == [RX_CMP_A] * 2 + [RX_CMP_B] * 2 + [RX_CMP_D] * 4
    assert [t.checksum for t in tags] == [False] * 6 + [True] * 2
    assert [t.ts for t in tags] == [1, 1, 2, 2, 4, 4, 4, 4]
    assert tags[0].parent == 0
    assert tags[2].parent == RX_CMP_A
    assert tags[6].parent == RX_CMP_B
    assert tags[0].i2s and not tags[4].i2s and tags[6].i2s
    assert tags[6].operand == 1 and tags[4].operand == 0


def test_parent_is_global_sweep_state():
    ct = build_ct([CmpEvent(a, 0, 1, b"\0", b"\1") for a in (S1, S2, 0x3333)])
    deps = DepsMap(3, ct)
    deps[(S1, 0, 0)][0] = True
    deps[(S2, 0, 0)][1] = True
    deps[(0x3333, 0, 0)][2] = True
    tags = place_all_tags(deps, ct, ChecksumIndex(), {}, [], b"\0\0\0")
    assert [t.parent for t in tags] == [0, S1, S2]


def test_derive_operands_copies_and_marks():
    src = TagArray([Tag(5, 1), Tag(6, 2)])
    out = derive_tags(src, "operands", length=2)
    assert list(out) == list(src) and out.derived and not src.derived


def test_derive_splice_and_add_offsets():
    src = TagArray([Tag(i + 1, i + 1) for i in range(20)])
    donor = [Tag(99, 9)] * 8
    added = derive_tags(src, "add", start=12, donor=donor, length=28)
    assert [t.id for t in added[12:20]] == [99] * 8
    assert added[20] == src[12] and added[27] == src[19] and added[11] == src[11]
    spliced = derive_tags(src, "splice", start=4, end=5, donor=[Tag(77, 1)] * 2, length=20)
    assert [t.id for t in spliced[4:6]] == [77, 77]
    assert spliced[6] == src[6] and spliced[3] == src[3]
    deleted = derive_tags(src, "delete", start=0, end=4, length=15)
    assert deleted[0] == src[5]


def test_derive_rejects_length_mismatch_and_unknown_kind():
    src = TagArray([Tag(1, 1)] * 4)
    with pytest.raises(ValueError):
        derive_tags(src, "operands", length=5)
    assert derive_tags(src, "havoc") is None
    assert derive_tags(None, "operands") is None


def test_sidecar_round_trip(tmp_path):
    tags = TagArray([Tag(0xABCD, 70000, 3, 4, 1, True, True, 123), UNTAGGED], derived=True)
    blob = dumps(tags)
    assert len(blob) == 12 + 16 * 2
    back = loads(blob)
    assert list(back) == list(tags) and back.derived
    assert tags[0].flags == F_OP2 | F_I2S | F_CHECKSUM
    save(tmp_path / "x.tags", tags)
    assert list(load(tmp_path / "x.tags")) == list(tags)


def test_sidecar_rejects_garbage():
    with pytest.raises(ValueError):
        loads(b"XXXX" + b"\0" * 8)
    blob = dumps(TagArray([UNTAGGED]))
    with pytest.raises(ValueError):
        loads(blob[:-1])
