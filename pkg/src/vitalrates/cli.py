"""Command line entry point: ``vitalrates run`` and ``vitalrates sample``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config, parse_quantiles, with_overrides
from .core import VitalRatesError
from .pipeline import run_pipeline
from .sample import write_sample_dataset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitalrates", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="project rates for the countries in a config file")
    run.add_argument("--config", help="config file (default: $VITALRATES_CONFIG)")
    run.add_argument("--countries", help="comma-separated country codes (default: all)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int, help="worker processes")
    run.add_argument("--quantiles", help="comma-separated quantile levels")
    run.add_argument("--emit-trajectories", action="store_true", default=None, help="also write every trajectory")
    run.add_argument("--emit-lifetables", action="store_true", default=None, help="also write base-period life tables")

    sample = sub.add_parser("sample", help="write the synthetic sample dataset")
    sample.add_argument("out", help="target directory")
    sample.add_argument("-n", "--trajectories", type=int, default=1000)
    sample.add_argument("--seed", type=int, default=20140701)
    return parser


def _run(args) -> int:
    cfg = load_config(args.config)
    changes = {
        "countries": tuple(c.strip() for c in args.countries.split(",") if c.strip()) if args.countries else None,
        "out_dir": Path(args.out) if args.out else None,
        "workers": args.workers,
        "quantiles": parse_quantiles(args.quantiles) if args.quantiles else None,
        "emit_trajectories": args.emit_trajectories,
        "emit_lifetables": args.emit_lifetables,
    }
    cfg = with_overrides(cfg, **changes)
    report = run_pipeline(cfg)
    for country in report.succeeded:
        print(f"{country}: ok")
    for country, message in report.failures.items():
        print(f"{country}: FAILED: {message}", file=sys.stderr)
    print(f"outputs written to {report.out_dir}")
    return report.exit_code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sample":
            path = write_sample_dataset(args.out, args.trajectories, args.seed)
            print(f"sample dataset written to {path}")
            return 0
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VitalRatesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
