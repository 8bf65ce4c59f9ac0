import itertools

import pytest

from tagfuzz.coverage import (BUCKET_REPRESENTATIVES, STRUCTURE, SURGICAL, CoverageMap, bucket,
                              bucketize, path_hash)
from tagfuzz.target import Mode, Status, Tracer, run_target, site_id
from tagfuzz.targets import (BM_MAGIC_OK, MB_CRC_BAD, MB_CRC_OK, RUNNING_EXAMPLE_SEED, RX_PROCESS,
                             get_target, minipng_seed, REGISTRY)
from tagfuzz.fuzzer import reached_blocks


def ref_bucket(c):
    for lo, hi, b in ((1, 1, 1), (2, 2, 2), (3, 3, 4), (4, 7, 8), (8, 15, 16),
                      (16, 31, 32), (32, 127, 64)):
        if lo <= c <= hi:
            return b
    return 128 if c >= 128 else 0


def test_bucket_table_matches_afl_classes():
    for c in range(0, 600):
        assert bucket(c) == ref_bucket(c)
    for b, c in BUCKET_REPRESENTATIVES.items():
        assert bucket(c) == b


def test_bucketize_drops_zero_counts():
    assert bucketize({1: 0, 2: 3, 3: 300}) == {2: 4, 3: 128}


def test_first_execution_is_interesting_and_replay_is_not():
    m = CoverageMap()
    trace = {5: 1, 9: 3}
    assert m.is_interesting(trace)
    assert not m.is_interesting(trace)


def test_loop_bucketization_example():
    surg, struct = CoverageMap(), CoverageMap()
    for m in (surg, struct):
        m.is_interesting({1: 3}, STRUCTURE)
        m.begin_stage({1: 3})
    # 3 -> 4 enters the 4-7 bucket: new under both rules
    assert surg.is_interesting({1: 4}, SURGICAL)
    assert struct.is_interesting({1: 4}, STRUCTURE)
    # 5 stays in 4-7: only the stage maximum notices
    assert surg.is_interesting({1: 5}, SURGICAL)
    assert not struct.is_interesting({1: 5}, STRUCTURE)


def test_would_be_interesting_is_pure():
    m = CoverageMap()
    assert m.would_be_interesting({3: 1})
    assert m.would_be_interesting({3: 1})
    m.is_interesting({3: 1})
    assert not m.would_be_interesting({3: 1})


def test_path_hash_depends_only_on_buckets():
    assert path_hash({1: 4, 2: 1}) == path_hash({2: 1, 1: 7})
    assert path_hash({1: 4}) != path_hash({1: 8})
    assert path_hash({}) == path_hash({1: 0})


def test_site_ids_are_context_sensitive_and_never_zero():
    assert site_id(0x1234, 0) == 0x1234
    assert site_id(0x1234, 0x99) != site_id(0x1234, 0x77)
    assert site_id(0, 0) == 0xFFFF


def test_patched_compare_passes_but_logs_true_operands():
    t = Tracer(patches={0x10})
    assert t.cmp(0x10, 1, 2, 4, False) is True
    assert t.cmp(0x11, 1, 2, 4, False) is False
    assert t.cmp(0x10, 1, 2, 4, False, passing=None) is False
    assert t.cmps[0].op1 == (1).to_bytes(4, "little")
    assert t.cmps[0].op2 == (2).to_bytes(4, "little")


def test_light_mode_records_no_comparisons():
    tr = run_target(get_target("running_example"), RUNNING_EXAMPLE_SEED, mode=Mode.LIGHT)
    assert tr.cmps == [] and tr.counts


def test_same_input_same_trace():
    t = get_target("minipng")
    a, b = run_target(t, minipng_seed()), run_target(t, minipng_seed())
    assert a.counts == b.counts and a.cmps == b.cmps


def test_running_example_seed_reaches_processing():
    assert RX_PROCESS in reached_blocks(get_target("running_example"), [RUNNING_EXAMPLE_SEED])


def test_minipng_corrupt_crc_stops_before_data():
    seed = bytearray(minipng_seed())
    seed[29] ^= 1  # IHDR crc
    blocks = reached_blocks(get_target("minipng"), [bytes(seed)])
    assert MB_CRC_BAD in blocks and MB_CRC_OK not in blocks


def test_bytewise_magic_accepts_ihdr_at_offset_4():
    assert BM_MAGIC_OK in reached_blocks(get_target("bytewise_magic"), [b"0000IHDR" + b"0" * 8])
    assert BM_MAGIC_OK not in reached_blocks(get_target("bytewise_magic"), [b"0000IHDX" + b"0" * 8])


def test_minipng_seed_runs_clean():
    assert run_target(get_target("minipng"), minipng_seed()).status == Status.OK


def test_registry_has_required_targets():
    assert {"running_example", "bytewise_magic", "minipng", "multiformat"} <= set(REGISTRY)
    with pytest.raises(KeyError):
        get_target("nope")


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        run_target(get_target("minipng"), b"")


def test_event_budget_turns_into_timeout():
    tr = run_target(get_target("running_example"), RUNNING_EXAMPLE_SEED, max_events=3)
    assert tr.status == Status.TIMEOUT
