"""A 4-byte chunk type checked one byte at a time, found without a dictionary.

Operand fuzzing learns one byte per surgical pass: 'I', then 'IH', and so on.
The script follows the chain by hand, then runs a small campaign.

    python demos/magic_bytes.py
"""

from tagfuzz.fuzzer import Config, Fuzzer, reached_blocks
from tagfuzz.targets import BM_MAGIC_OK, get_target


def chain_by_hand(target, seed, passes=4):
    fz = Fuzzer(target, Config(budget=10**6))
    fz.add_seeds([seed])
    entry = fz.queue[0]
    for step in range(passes):
        before = fz.executor.execs
        children = [c for c in fz.surgical_stage(entry) if c.provenance.startswith("operands")]
        # follow the child that extends the IHDR prefix
        best = max(children, key=lambda c: sum(a == b for a, b in zip(c.data[4:8], b"IHDR")),
                   default=None)
        print(f"pass {step + 1}: {fz.executor.execs - before} execs, "
              f"{len(children)} operand children, following {best.data[:10] if best else None}")
        if best is None:
            return
        entry = best
    print("magic reached:", BM_MAGIC_OK in reached_blocks(target, [entry.data]))


def campaign(target, seed, rng_seed):
    fz = Fuzzer(target, Config(budget=10_000, seed=rng_seed, window_ms=0)).run([seed])
    hit = next((e for e in fz.queue if BM_MAGIC_OK in reached_blocks(target, [e.data])), None)
    where = f"entry {hit.id} ({hit.provenance})" if hit else "not found"
    print(f"campaign seed {rng_seed}: {len(fz.queue)} queued, magic {where}")


if __name__ == "__main__":
    target = get_target("bytewise_magic")
    seed = b"0" * 72
    chain_by_hand(target, seed)
    for s in (1, 2):
        campaign(target, seed, s)
