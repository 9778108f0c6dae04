"""Command-line interface: run, validate, and sweep scenarios."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError
from .scenario import load_config, output_directory, run, with_overrides

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2

_FAILED_TERMINATIONS = ("error-growth", "target-lost", "non-finite")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="acmsim", description="Aerial continuum arm simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario")
    run_p.add_argument("config", help="scenario config file")
    run_p.add_argument("--out", help="output directory (default: $ACMSIM_OUT or .)")
    run_p.add_argument("--seed", type=int, help="perturbation seed override")
    run_p.add_argument("--perturb", type=float, help="perturbation factor override")

    val_p = sub.add_parser("validate", help="check a config file")
    val_p.add_argument("config")

    sweep_p = sub.add_parser("sweep", help="run over a grid of perturbation factors")
    sweep_p.add_argument("config")
    sweep_p.add_argument(
        "--perturb-grid", required=True, help="comma-separated factors, e.g. 0,0.1,0.2"
    )
    sweep_p.add_argument("--out", help="output directory (default: $ACMSIM_OUT or .)")
    sweep_p.add_argument("--seed", type=int, help="perturbation seed override")
    return parser


def _run_once(config, stem: str, out_dir: Path) -> str:
    log, summary = run(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.write_csv(out_dir / f"{stem}.csv")
    summary.write_json(out_dir / f"{stem}.summary.json")
    print(
        f"{stem}: {summary.termination} after {summary.steps} steps, "
        f"rmse {summary.initial_rmse:.4g} -> {summary.final_rmse:.4g}"
    )
    return summary.termination


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"acmsim: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"acmsim: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for notice in config.notices:
        print(f"note: {notice}", file=sys.stderr)

    stem = Path(args.config).stem
    if args.command == "validate":
        print(f"{args.config}: valid")
        return EXIT_OK

    out_dir = output_directory(args.out)
    if args.command == "run":
        try:
            config = with_overrides(config, args.perturb, args.seed)
        except ConfigError as exc:
            print(f"acmsim: {exc}", file=sys.stderr)
            return EXIT_USAGE
        termination = _run_once(config, stem, out_dir)
        return EXIT_DIVERGED if termination in _FAILED_TERMINATIONS else EXIT_OK

    # sweep
    try:
        factors = [float(p) for p in args.perturb_grid.split(",") if p.strip()]
    except ValueError:
        print("acmsim: --perturb-grid expects comma-separated numbers", file=sys.stderr)
        return EXIT_USAGE
    if not factors:
        print("acmsim: --perturb-grid is empty", file=sys.stderr)
        return EXIT_USAGE
    worst = EXIT_OK
    for factor in factors:
        try:
            variant = with_overrides(config, factor, args.seed)
        except ConfigError as exc:
            print(f"acmsim: {exc}", file=sys.stderr)
            return EXIT_USAGE
        label = f"{stem}_p{factor:g}"
        termination = _run_once(variant, label, out_dir)
        if termination in _FAILED_TERMINATIONS:
            worst = EXIT_DIVERGED
    return worst


if __name__ == "__main__":
    sys.exit(main())
