import random
import struct
import zlib

import pytest

from conftest import xor_fold_oracle
from tagfuzz.fuzzer import (BASE_ENERGY, WINDOW_MS, Config, Fuzzer, QueueEntry, choose_step,
                            energy, reached_blocks, surgical_probability)
from tagfuzz.i2s import CkStatus
from tagfuzz.tags import load as load_tags
from tagfuzz.target import Status, run_target
from tagfuzz.targets import (PNG_MAGIC, RUNNING_EXAMPLE_SEED, RX_CMP_D, RX_PROCESS, get_target,
                             minipng_seed, png_chunk)


def _entry(cost=100, n=10):
    return QueueEntry(0, b"x" * n, cost=cost)


def test_energy_examples():
    assert energy(_entry(), 100, 10) == BASE_ENERGY
    assert energy(_entry(cost=25), 100, 10) == 256
    assert energy(_entry(cost=800), 100, 10) == 16
    assert energy(_entry(n=40), 100, 10) == 32
    assert energy(_entry(n=2), 100, 10) == 128


def test_surgical_probability_ramp():
    assert surgical_probability(1000, 1000, WINDOW_MS) == 0.0
    assert surgical_probability(1000 + WINDOW_MS, 1000, WINDOW_MS) == 1.0
    assert surgical_probability(WINDOW_MS / 2, 0, WINDOW_MS) == 0.5
    assert surgical_probability(0, 0, 0) == 1.0


def test_choose_step_limits_and_rate():
    rng = random.Random(0)
    assert {choose_step(rng, 0.0, 0.0) for _ in range(1000)} == {"havoc"}
    n = 256 * 2000
    structural = sum(choose_step(rng, 1 / 15, 1 / 15) != "havoc" for _ in range(n))
    per_stack = structural / 2000
    assert abs(per_stack - 256 * 2 / 15) <= 0.05 * 256 * 2 / 15


def test_config_validation():
    with pytest.raises(ValueError):
        Config(pr_field=1.5).validate()
    with pytest.raises(ValueError):
        Config(budget=0).validate()
    with pytest.raises(ValueError):
        Config(pr_field=0.6, pr_chunk=0.6).validate()


def test_wants_surgical_rules():
    t = get_target("running_example")
    fz = Fuzzer(t, Config(budget=10**6))
    fz.add_seeds([RUNNING_EXAMPLE_SEED])
    seed = fz.queue[0]
    assert fz.wants_surgical(seed)
    seed.surgical = True
    assert not fz.wants_surgical(seed)
    big = QueueEntry(1, b"\0" * 3001, provenance="stack:0")
    fz.last_interesting_ms = -10 * WINDOW_MS
    assert not fz.wants_surgical(big)
    child = QueueEntry(2, b"\0" * 8, provenance="stack:0")
    assert fz.wants_surgical(child)
    fz.last_interesting_ms = fz.now_ms
    assert not fz.wants_surgical(child)


def test_surgical_stage_on_running_example():
    t = get_target("running_example")
    seed = bytearray(RUNNING_EXAMPLE_SEED)
    seed[4] = 42  # stale checksum
    fz = Fuzzer(t, Config(budget=10**6, operand_fuzz=False))
    fz.add_seeds([bytes(seed)])
    e = fz.queue[0]
    fz.surgical_stage(e)
    assert e.tag_state == "surgical" and e.repaired_ok
    assert fz.ci[RX_CMP_D].status == CkStatus.CONFIRMED
    assert int.from_bytes(e.data[6:8], "little") == xor_fold_oracle(e.data, 6)
    assert RX_PROCESS in reached_blocks(t, [e.data])


def test_surgical_stage_without_comparisons():
    fz = Fuzzer(get_target("running_example"), Config(budget=10**6))
    fz.add_seeds([b"\x01\x02"])
    e = fz.queue[0]
    fz.surgical_stage(e)
    assert e.repaired_ok and e.tags.tagged == 0 and len(e.tags) == 2


def test_minipng_checksum_bytes_and_untouched_trailer():
    seed = minipng_seed()
    fz = Fuzzer(get_target("minipng"), Config(budget=10**6, operand_fuzz=False))
    fz.add_seeds([seed])
    e = fz.queue[0]
    fz.surgical_stage(e)
    e.surgical = False
    fz.surgical_stage(e)
    crc_fields = {29, 30, 31, 32, 51, 52, 53, 54, 75, 76, 77, 78, 87, 88, 89, 90}
    assert {b for b, t in enumerate(e.tags) if t.checksum} == crc_fields
    trailer = range(91, len(seed))
    assert all(not e.tags[b].id for b in trailer)


def test_structure_stage_pure_havoc_keeps_tags_off():
    fz = Fuzzer(get_target("running_example"),
                Config(budget=10**6, pr_field=0.0, pr_chunk=0.0, seed=1))
    fz.add_seeds([RUNNING_EXAMPLE_SEED])
    new = fz.structure_stage(fz.queue[0], children=50)
    assert fz.executor.execs == 1 + 50
    assert all(e.tags is None for e in new)


def _chunk_types(data):
    out, off = [], 8
    while off + 8 <= len(data):
        n = int.from_bytes(data[off:off + 4], "big")
        out.append(data[off + 4:off + 8])
        off += 12 + n
    return out


def test_minipng_campaign_adds_a_chunk():
    t = get_target("minipng")
    fz = Fuzzer(t, Config(budget=10_000, seed=0)).run(t.seeds)
    assert any(len(set(ty)) < len(ty) for ty in (_chunk_types(e.data) for e in fz.queue
                                                 if e.provenance.startswith("stack")))


def _palette_crash():
    ihdr = struct.pack(">IIBBBBB", 4, 4, 16, 3, 0, 0, 0)
    return PNG_MAGIC + png_chunk(b"IHDR", ihdr) + png_chunk(b"IEND", b"")


def test_crashes_saved_verbatim(tmp_path):
    t = get_target("minipng")
    fz = Fuzzer(t, Config(budget=10**6), tmp_path)
    fz.add_seeds([minipng_seed()])
    crash = _palette_crash()
    assert run_target(t, crash).status == Status.CRASH
    fz.executor.run_observed(crash)
    fz._handle_crashes(None)
    assert (tmp_path / "crashes" / "id_000000").read_bytes() == crash
    assert fz.crashes[0].reproduces and fz.crashes[0].repaired is None


def test_campaign_output_layout(tmp_path):
    t = get_target("running_example")
    Fuzzer(t, Config(budget=3000, seed=2, stats_every=1000), tmp_path).run(t.seeds)
    assert (tmp_path / "ci.txt").read_text().count("0x4d40 confirmed") == 1
    assert (tmp_path / "queue" / "id_000000").exists()
    tags = load_tags(tmp_path / "queue" / "id_000000.tags")
    assert len(tags) == 8
    rows = (tmp_path / "stats.jsonl").read_text().splitlines()
    assert len(rows) >= 3 and '"execs"' in rows[0]


def test_campaigns_are_reproducible():
    t = get_target("running_example")
    runs = [Fuzzer(t, Config(budget=4000, seed=7)).run(t.seeds) for _ in range(2)]
    assert [e.data for e in runs[0].queue] == [e.data for e in runs[1].queue]
    assert runs[0].ci.to_text() == runs[1].ci.to_text()
    assert runs[0].stats_log == runs[1].stats_log
