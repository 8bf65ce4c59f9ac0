import random

import pytest
from hypothesis import given, settings, strategies as st

from structure_fixtures import (field_combined, field_depth_cap, field_per_byte, field_single,
                                chunk_parent_cksum, chunk_extend_xy, chunk_blob, run)
from tagfuzz.fuzzer import reached_blocks
from tagfuzz.report import analyze
from tagfuzz.structure import (ChunkSpan, chunk_addition, chunk_deletion, chunk_splicing,
                               chunks_with_id, field_mutation, fields, find_chunk_end,
                               find_field_end, get_random_chunk, go_left_while_same_tag,
                               pick_field)
from tagfuzz.tags import Tag, TagArray, UNTAGGED
from tagfuzz.targets import RUNNING_EXAMPLE_SEED, RX_A_OK, get_target, minipng_seed


class Always:
    """rng stub pinning the probabilistic branches."""

    def __init__(self, value):
        self.value = value

    def random(self):
        return self.value


ON, OFF = Always(0.0), Always(0.999)


@pytest.mark.parametrize("fixture", [field_single, field_per_byte, field_combined, field_depth_cap])
def test_field_patterns(fixture):
    tags, k, end = fixture()
    assert find_field_end(tags, k) == end


def test_per_byte_field_from_the_middle():
    tags, k, _ = field_per_byte()
    assert find_field_end(tags, k + 2) == k + 3


def test_chunk_checksum_absorbed_through_parent():
    tags, k, end = chunk_parent_cksum()
    assert find_chunk_end(tags, k, OFF, pr_extend=0.0) == end
    assert find_chunk_end(tags, k, ON, pr_extend=1.0) == end


def test_chunk_extension_reaches_x_and_y():
    tags, k, end_off, end_on = chunk_extend_xy()
    assert find_chunk_end(tags, k, OFF, pr_extend=0.0) == end_off
    assert find_chunk_end(tags, k, ON, pr_extend=1.0) == end_on


def test_chunk_blob_only_under_extension():
    tags, k, end_off, end_on = chunk_blob()
    assert find_chunk_end(tags, k, OFF, pr_extend=0.0) == end_off
    assert find_chunk_end(tags, k, ON, pr_extend=1.0) == end_on


def _random_tags(rng, n):
    out = []
    while len(out) < n:
        if rng.random() < 0.2:
            out += [UNTAGGED] * rng.randint(1, 3)
        else:
            out += run(rng.randint(1, 6), rng.randint(1, 6), rng.randint(1, 4), rng.randint(0, 6))
    return out[:n]


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 60))
def test_ends_never_precede_start(seed, n):
    rng = random.Random(seed)
    tags = _random_tags(rng, n)
    for k in range(n):
        if tags[k].id:
            assert k <= find_field_end(tags, k) < n
            assert k <= find_chunk_end(tags, k, rng) < n
        once = go_left_while_same_tag(tags, k)
        assert go_left_while_same_tag(tags, once) == once


def test_fields_sweep_on_running_example():
    _, tags, _ = analyze(get_target("running_example"), RUNNING_EXAMPLE_SEED)
    assert [(f.start, f.end) for f in fields(tags)] == [(0, 3), (4, 5), (6, 7)]


def test_pick_field_mid_field_retracts():
    _, tags, _ = analyze(get_target("running_example"), RUNNING_EXAMPLE_SEED)
    rng = random.Random(0)
    assert pick_field(tags, 5, rng, pr_i2s=1.0) == pick_field(tags, 4, rng, pr_i2s=1.0)
    assert (pick_field(tags, 5, rng).start, pick_field(tags, 5, rng).end) == (4, 5)


def test_pick_field_skips_i2s_starts_without_luck():
    _, tags, _ = analyze(get_target("running_example"), RUNNING_EXAMPLE_SEED)
    span = pick_field(tags, 0, random.Random(0), pr_i2s=0.0)
    assert (span.start, span.end) == (4, 5)


def test_field_mutation_is_confined():
    _, tags, _ = analyze(get_target("running_example"), RUNNING_EXAMPLE_SEED)
    rng = random.Random(3)
    for _ in range(300):
        out = field_mutation(tags, RUNNING_EXAMPLE_SEED, rng, pr_i2s=0.0)
        assert len(out) == len(RUNNING_EXAMPLE_SEED)
        changed = [i for i in range(8) if out[i] != RUNNING_EXAMPLE_SEED[i]]
        assert set(changed) <= {4, 5}


def test_field_mutation_untagged_is_identity():
    assert field_mutation(TagArray.empty(4), b"abcd", random.Random(0)) == b"abcd"


def test_random_chunk_whole_input():
    tags = TagArray(run(5, 1, 6))
    for pr in (0.0, 1.0):
        span = get_random_chunk(tags, random.Random(0), pr_chunk12=pr, pr_extend=0.0)
        assert (span.start, span.end) == (0, 5)
    assert get_random_chunk(TagArray.empty(3), random.Random(0)) is None


def test_rare_chunk_type_reachable_by_id():
    tags = []
    for _ in range(10):
        tags += run(0xA, 1, 3) + run(0xA1, 2, 2, 0xA)
    tags += run(0xB, 1, 3)
    chunks = chunks_with_id(tags, 0xB, random.Random(0), pr_extend=0.0)
    assert [(c.start, c.end) for c in chunks] == [(50, 52)]


def test_minipng_chunk_from_length_field():
    seed = minipng_seed()
    _, tags, _ = analyze(get_target("minipng"), seed, passes=2)
    # IDAT chunk: length 55-58 (only the low byte is tagged), type, 12 data bytes, crc 75-78
    assert seed[59:63] == b"IDAT"
    assert find_chunk_end(tags, 58, OFF, pr_extend=0.0) == 78


def test_deletion_and_reinsertion_round_trip():
    data = bytes(range(20))
    tags = TagArray(run(1, 1, 20))
    span = ChunkSpan(4, 9, 1, 0)
    m = chunk_deletion(data, tags, span)
    assert m.data[:4] + data[4:10] + m.data[4:] == data
    assert len(m.tags) == 14


def test_deleting_everything_is_skipped():
    assert chunk_deletion(b"ab", TagArray(run(1, 1, 2)), ChunkSpan(0, 1, 1, 0)) is None


def test_splice_length_bookkeeping():
    data = b"A" * 10 + b"B" * 6 + b"C" * 4
    tags = TagArray(run(1, 1, 10) + run(2, 2, 6, 1) + run(3, 3, 4, 1))
    donor = b"xyz"
    donor_tags = TagArray(run(2, 2, 3, 1))
    span = ChunkSpan(10, 15, 2, 1)
    m = chunk_splicing(data, tags, span, [(donor, donor_tags)], random.Random(0), pr_extend=0.0)
    assert len(m.data) == len(data) - 6 + 3
    assert m.data == b"A" * 10 + b"xyz" + b"C" * 4
    assert m.tags.derived and [t.id for t in m.tags[10:13]] == [2, 2, 2]


def test_addition_needs_matching_parent_and_keeps_parser_alive():
    t = get_target("running_example")
    data, tags, _ = analyze(t, RUNNING_EXAMPLE_SEED)
    span = get_random_chunk(tags, random.Random(1), pr_chunk12=1.0, pr_extend=0.0)
    rng = random.Random(0)
    donors = [(data, tags)]
    lead = next(b for b in range(len(tags)) if tags[b].parent)
    span = ChunkSpan(lead, 7, tags[lead].id, tags[lead].parent)
    m = chunk_addition(data, tags, span, donors, rng, pr_extend=0.0)
    assert m is not None and len(m.data) > len(data)
    assert RX_A_OK in reached_blocks(t, [m.data])
    orphan = ChunkSpan(0, 1, tags[0].id, 0)
    assert chunk_addition(data, tags, orphan, donors, rng) is None


def test_no_donor_means_no_op():
    tags = TagArray(run(1, 1, 4))
    assert chunk_splicing(b"abcd", tags, ChunkSpan(0, 3, 1, 0), [], random.Random(0)) is None


def test_mutations_reproducible():
    data, tags, _ = analyze(get_target("minipng"), minipng_seed(), passes=2)
    from tagfuzz.structure import chunk_mutation
    donors = [(data, tags)]
    a = [chunk_mutation(data, tags, donors, random.Random(s)) for s in range(20)]
    b = [chunk_mutation(data, tags, donors, random.Random(s)) for s in range(20)]
    assert [m and m.data for m in a] == [m and m.data for m in b]
