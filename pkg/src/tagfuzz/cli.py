"""Command-line entry point.

Exit codes:
  0  success
  2  bad arguments or configuration
  3  unknown target
  4  seed directory missing, empty or unreadable
  5  output directory not writable
  6  input for inspect unreadable or larger than the surgical cap
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .cmplog import build_ct
from .deps import SURGICAL_CAP
from .fuzzer import Config, Fuzzer
from .report import analyze, hexdump, render, structure
from .structure import PR_CHUNK12, PR_EXTEND, PR_I2S
from .target import run_target
from .targets import REGISTRY, get_target

EXIT_OK, EXIT_CONFIG, EXIT_TARGET, EXIT_SEEDS, EXIT_OUTPUT, EXIT_INPUT = 0, 2, 3, 4, 5, 6
OUT_ENV = "TAGFUZZ_OUT"


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _prob(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not within [0, 1]")
    return v


def _positive(text: str) -> int:
    v = int(float(text))
    if v <= 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tagfuzz", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    f = sub.add_parser("fuzz", help="run a campaign")
    f.add_argument("--target", required=True)
    f.add_argument("--seeds", type=Path, help="seed directory (default: the target's built-in seeds)")
    f.add_argument("--out", type=Path, default=Path("out"),
                   help=f"output directory (env {OUT_ENV} overrides)")
    f.add_argument("--execs", type=_positive, default=100_000, help="execution budget")
    f.add_argument("--seconds", type=float, help="wall-clock budget (not reproducible)")
    f.add_argument("--seed", type=int, default=0, help="rng seed")
    f.add_argument("--pr-field", type=_prob, default=1 / 15)
    f.add_argument("--pr-chunk", type=_prob, default=1 / 15)
    f.add_argument("--pr-i2s", type=_prob, default=PR_I2S)
    f.add_argument("--pr-extend", type=_prob, default=PR_EXTEND)
    f.add_argument("--pr-chunk12", type=_prob, default=PR_CHUNK12)
    f.add_argument("--surgical-cap", type=_positive, default=SURGICAL_CAP)
    f.add_argument("--ms-per-exec", type=float, default=Config.ms_per_exec,
                   help="virtual clock rate driving deferred surgical entry")
    f.add_argument("--window-ms", type=float, default=Config.window_ms,
                   help="deferral window for surgical entry; 0 sends every entry through it")
    f.add_argument("--no-operand-fuzz", action="store_true")
    f.add_argument("--no-checksum", action="store_true")
    f.add_argument("--no-struct-mutations", action="store_true")

    i = sub.add_parser("inspect", help="print inferred fields and chunks of one input")
    i.add_argument("--target", required=True)
    i.add_argument("input", type=Path)
    i.add_argument("--passes", type=_positive, default=1, help="surgical passes before reporting")
    i.add_argument("--json", action="store_true", help="machine-readable output")
    i.add_argument("--hexdump", action="store_true", help="also print bytes with checksum marks")

    sub.add_parser("targets", help="list registered targets")
    return p


def _target(name: str):
    try:
        return get_target(name)
    except KeyError as exc:
        raise CliError(EXIT_TARGET, str(exc.args[0])) from None


def _read_seeds(path: Path | None, target) -> list[bytes]:
    if path is None:
        if not target.seeds:
            raise CliError(EXIT_SEEDS, f"target {target.name} has no built-in seeds; pass --seeds")
        return list(target.seeds)
    if not path.is_dir():
        raise CliError(EXIT_SEEDS, f"seed directory {path} does not exist")
    seeds = []
    try:
        for fp in sorted(path.iterdir()):
            if fp.is_file():
                data = fp.read_bytes()
                if data:
                    seeds.append(data)
    except OSError as exc:
        raise CliError(EXIT_SEEDS, f"cannot read seeds: {exc}") from None
    if not seeds:
        raise CliError(EXIT_SEEDS, f"seed directory {path} holds no non-empty files")
    return seeds


def cmd_fuzz(args) -> int:
    target = _target(args.target)
    seeds = _read_seeds(args.seeds, target)
    out = Path(os.environ.get(OUT_ENV) or args.out)
    cfg = Config(budget=args.execs, seed=args.seed, pr_field=args.pr_field,
                 pr_chunk=args.pr_chunk, pr_i2s=args.pr_i2s, pr_extend=args.pr_extend,
                 pr_chunk12=args.pr_chunk12, surgical_cap=args.surgical_cap,
                 operand_fuzz=not args.no_operand_fuzz, checksums=not args.no_checksum,
                 struct_mutations=not args.no_struct_mutations, ms_per_exec=args.ms_per_exec,
                 window_ms=args.window_ms,
                 seconds=args.seconds)
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"output directory {out} is not writable: {exc}") from None
    fz = Fuzzer(target, cfg, out)
    fz.run(seeds)
    st = fz._stats()
    print(f"{target.name}: {st['execs']} execs, {st['queueSize']} queued, {st['edges']} edges, "
          f"{st['crashes']} crashes, checksums confirmed={st['checksumsConfirmed']} "
          f"fp={st['checksumsFP']}; output in {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    target = _target(args.target)
    try:
        data = args.input.read_bytes()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {args.input}: {exc}") from None
    if not data:
        raise CliError(EXIT_INPUT, "input is empty")
    if len(data) > SURGICAL_CAP:
        raise CliError(EXIT_INPUT, f"input of {len(data)} bytes exceeds the surgical cap ({SURGICAL_CAP})")
    repaired, tags, fz = analyze(target, data, args.passes)
    addrs = {}
    for s, rec in build_ct(run_target(target, repaired, fz.patches()).cmps).items():
        addrs[s] = rec.addr
    rep = structure(repaired, tags, addrs)
    if args.json:
        print(json.dumps(rep, indent=2))
    else:
        sys.stdout.write(render(rep))
        if args.hexdump:
            sys.stdout.write(hexdump(repaired, tags))
    return EXIT_OK


def cmd_targets(args) -> int:
    for name in sorted(REGISTRY):
        print(f"{name:16s} {REGISTRY[name].description}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"fuzz": cmd_fuzz, "inspect": cmd_inspect, "targets": cmd_targets}[args.cmd]
    try:
        return handler(args)
    except CliError as exc:
        print(f"tagfuzz: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
