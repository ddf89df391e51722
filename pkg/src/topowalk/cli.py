"""Command-line front end: ``topowalk --preset fig6 --out results/``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, InvariantViolation
from .experiments import load_config, load_preset, preset_names, run, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topowalk", description="Run quantum-walk experiments on multiport chains.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
    src.add_argument("--preset", metavar="NAME", help="bundled experiment preset")
    src.add_argument("--list-presets", action="store_true", help="print bundled presets and exit")
    p.add_argument("--out", metavar="DIR", default=None, help="directory for CSV/JSON outputs")
    p.add_argument("--threads", type=int, default=0, metavar="N", help="sweep workers (0 = one per core)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        for name in preset_names():
            print(name)
        return EXIT_OK
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.preset:
            cfg = load_preset(args.preset)
        else:
            print("error: give --config PATH or --preset NAME", file=sys.stderr)
            return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(cfg, threads=args.threads)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"{cfg.name or cfg.kind} ({cfg.kind})")
    for line in result.lines:
        print(f"  {line}")
    if args.out:
        for path in write_outputs(result, args.out):
            print(f"  wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
