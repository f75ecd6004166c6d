"""Command-line entry point: ``gsp2p <command> --config <path>``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import cli_io
from .errors import Gsp2pError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsp2p", description="Frequency-support headroom studies.")
    ap.add_argument("command", choices=cli_io.COMMANDS)
    ap.add_argument("--config", required=True,
                    help="study config JSON, or 'fixture' for the bundled desk-scale study")
    ap.add_argument("--out", default=None, help="output directory (default: the config's output_dir)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for the headroom sweep")
    ap.add_argument("--seed", type=int, default=None, help="seed for redispatch wind scenarios")
    ap.add_argument("--stdout", action="store_true", help="also print the result JSON to standard output")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("gsp2p: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = cli_io.bundled_fixture() if args.config == "fixture" else cli_io.load_config(args.config)
        bundle = cli_io.run_pipeline(cfg, args.command, args.out, args.jobs, args.seed)
    except Gsp2pError as exc:
        print(f"gsp2p {args.command}: {exc}", file=sys.stderr)
        return 1
    if args.stdout:
        sys.stdout.write(bundle.to_json())
    if not bundle.ok:
        print(f"gsp2p {args.command}: completed but checks failed (see {args.command}.json)", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
