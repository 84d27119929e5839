"""Command line entry point: ``qoesim run|sweep|validate``."""
from __future__ import annotations

import argparse
import logging
import sys

from .admission import Mode
from .scenario import (
    ConfigError,
    InvariantViolation,
    IoFailure,
    RunReport,
    ScenarioConfig,
    dump_config,
    emit_reports,
    load_config,
    run_scenario,
    sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (YAML); defaults apply when omitted")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="override the config mode")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qoesim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("run", "run the configured mode at every capacity in capacity_list"),
        ("sweep", "run both architectures at every capacity"),
    ]:
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("--out", required=True, help="output directory for CSV and .dat files")
        sp.add_argument("--workers", type=int, default=1, help="parallel runs (processes)")
    sv = sub.add_parser("validate", parents=[common], help="check a config file and print the resolved config")
    sv.add_argument("--quiet", action="store_true", help="only set the exit status")
    return p


def _resolve(args: argparse.Namespace) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["mode"] = args.mode
    return cfg.replace(**changes) if changes else cfg


def _print_summary(reports: list[RunReport]) -> None:
    print(f"{'run_id':<20} {'admitted':>8} {'drop %':>7} {'util %':>7} {'mean MOS':>8}")
    for r in reports:
        m = r.metrics
        print(
            f"{r.run_id:<20} {m.admitted:>5}/{r.requests:<2} {100 * m.drop_ratio:7.2f} "
            f"{100 * m.utilization:7.2f} {m.mean_mos:8.2f}"
        )


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        if not args.quiet:
            sys.stdout.write(dump_config(cfg))
            print(f"# sla variant: {cfg.sla_variant()}")
        return EXIT_OK

    try:
        if args.command == "run":
            reports = run_scenario(cfg, workers=args.workers)
        else:
            reports = sweep(cfg, workers=args.workers)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    try:
        emit_reports(reports, args.out)
    except IoFailure as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    _print_summary(reports)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
