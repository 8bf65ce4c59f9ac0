"""Compare a minipng campaign with and without checksum handling.

The deep blocks (a magic IHDR width and the palette colour type) sit behind a
CRC-32 per chunk. Without patching and repair, mutated IHDR chunks almost
never carry a valid CRC.

    python demos/checksum_ablation.py [execs]
"""

import sys
import time

from tagfuzz.fuzzer import Config, Fuzzer, reached_blocks
from tagfuzz.targets import MINIPNG_DEEP, get_target


def run(checksums, budget, seed=1):
    t = get_target("minipng")
    t0 = time.perf_counter()
    fz = Fuzzer(t, Config(budget=budget, seed=seed, checksums=checksums)).run(t.seeds)
    inputs = [e.data for e in fz.queue] + [c.repaired or c.data for c in fz.crashes]
    blocks = reached_blocks(t, inputs)
    deep = [hex(b) for b in MINIPNG_DEEP if b in blocks]
    label = "full" if checksums else "no-checksum"
    print(f"{label:12s} {time.perf_counter() - t0:5.1f}s queue={len(fz.queue):4d} "
          f"crashes={len(fz.crashes)} deep blocks reached={deep}")
    print("  " + fz.ci.to_text().replace("\n", "\n  ").rstrip())


if __name__ == "__main__":
    budget = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    run(True, budget)
    run(False, budget)
