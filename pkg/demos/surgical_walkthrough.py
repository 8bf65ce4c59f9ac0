"""Walk one input through the surgical stage and print what each step learns.

    python demos/surgical_walkthrough.py [target] [hex-input]

Defaults to the id/size/data/checksum parser and its 8-byte seed.
"""

import sys

import numpy as np

from tagfuzz.cmplog import dump, sites_by_exec_order
from tagfuzz.deps import get_deps
from tagfuzz.i2s import ChecksumIndex, detect_i2s, is_checksum_candidate, mark_checksums
from tagfuzz.report import analyze, hexdump, render, structure
from tagfuzz.targets import get_target


def main(argv):
    name = argv[1] if len(argv) > 1 else "running_example"
    target = get_target(name)
    data = bytes.fromhex(argv[2]) if len(argv) > 2 else target.seeds[0]
    print(f"target {name}, input {data.hex()}\n")

    ct, deps, _ = get_deps(target, data)
    print("comparison table:")
    print(dump(ct))

    print("\ndependencies (bit flips whose site hit count did not move):")
    r = {}
    ci = ChecksumIndex()
    for s in sites_by_exec_order(ct):
        rec = ct[s]
        for op in (0, 1):
            pos = np.flatnonzero(deps.union(s, op)).tolist()
            if pos:
                print(f"  {rec.addr:#x} op{op + 1}: bytes {pos}")
        for j in range(len(rec.instances)):
            r[(s, j)] = detect_i2s(ct, deps, s, j, data)
            mark_checksums(r[(s, j)], deps, ci, ct, s, j)

    print("\ninput-to-state operands:")
    for (s, j), pair in r.items():
        for op, hit in enumerate(pair):
            if hit is not None and j == 0:
                print(f"  {ct[s].addr:#x} op{op + 1}: {hit.encoding} at {hit.offset}..{hit.offset + hit.width - 1}")

    print("\nchecksum candidates:", [hex(a) for a in ci] or "none")
    for (s, j), pair in r.items():
        x = is_checksum_candidate(pair, deps, s, j)
        if x is not None and j == 0:
            print(f"  {ct[s].addr:#x}: stored value is op{x + 1}, computed value is op{2 - x}")

    repaired, tags, fz = analyze(target, data)
    print("\nafter tag placement and repair:")
    print(render(structure(repaired, tags)), end="")
    print(hexdump(repaired, tags), end="")
    print(fz.ci.to_text(), end="")


if __name__ == "__main__":
    main(sys.argv)
