"""Command-line front end.

Exit codes: 0 success, 2 I/O error, 64 usage error, 65 configuration error.
The master seed is taken from ``--seed``, else ``$TWOSTAGE_SEED``, else the
config file.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .config import ScenarioConfig, load_config
from .engine import run_trial
from .errors import ConfigError
from .montecarlo import ReplicationError, compare_designs, power_curve, run_replications
from .report import FORMATS, dump_trial, emit_report
from .rng import replication_seed
from .stage2 import DESIGN_NAMES, NOf1, ResponseAdaptive, make_design

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_CONFIG = 0, 2, 64, 65
SEED_ENV = "TWOSTAGE_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twostage", description="Two-stage enrichment trial simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="scenario INI file")
        p.add_argument("--seed", type=int, help=f"master seed (overrides ${SEED_ENV} and the config)")
        p.add_argument("--reps", type=int, help="number of replications")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=FORMATS, default="csv")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="operating characteristics of one scenario")
    common(p)
    p.add_argument("--design", choices=DESIGN_NAMES, help="override the configured design")
    p.add_argument("--dump-trial", metavar="DIR",
                   help="also write stage tables and the event log of replication 0")

    p = sub.add_parser("compare", help="several Stage-2 designs on common random numbers")
    common(p)
    p.add_argument("--designs", default=",".join(DESIGN_NAMES),
                   help="comma-separated subset of: " + ", ".join(DESIGN_NAMES))

    p = sub.add_parser("power-curve", help="rejection rate over a grid of responder effects")
    common(p)
    p.add_argument("--effects", required=True, help="comma-separated responder effects")
    return parser


def _seed(args, config: ScenarioConfig) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} is not an integer: {env!r}") from None
    return config.mc.master_seed


def _designs(text: str, config: ScenarioConfig):
    names = [t.strip() for t in text.split(",") if t.strip()]
    if len(names) < 2:
        raise UsageError("--designs needs at least two designs")
    current = config.stage2.design
    designs = []
    for name in names:
        if name not in DESIGN_NAMES:
            raise UsageError(f"unknown design {name!r}")
        if name == current.name:
            designs.append(current)
        else:
            cycles = current.cycles if isinstance(current, NOf1) else 3
            urn = current.urn if isinstance(current, ResponseAdaptive) else None
            designs.append(make_design(name, cycles, urn))
    return designs


def _effects(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--effects must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("--effects is empty")
    return values


def _print_rows(rows, label, stream=sys.stdout):
    cols = ("rejection_rate", "stage1_stop_rate", "mean_total_n", "mean_duration_days",
            "mean_access_proportion", "mean_stage2_access", "mean_point_estimate")
    print(f"{label:>10} " + " ".join(f"{c:>22}" for c in cols), file=stream)
    for name, oc in rows:
        print(f"{name!s:>10} " + " ".join(f"{getattr(oc, c):>22.6g}" for c in cols), file=stream)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.reps is not None and args.reps < 1:
            raise UsageError("--reps must be >= 1")
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        config = load_config(args.config)
        seed = _seed(args, config)
        reps = args.reps if args.reps is not None else config.mc.replications

        if args.command == "simulate":
            if args.design and args.design != config.stage2.design.name:
                config = config.with_design(make_design(args.design))
            oc = run_replications(config, reps, seed, args.workers)
            rows, label, stem = [(config.stage2.design.name, oc)], "design", "simulate"
            if args.dump_trial:
                dump_trial(run_trial(config, replication_seed(seed, 0)),
                           config.population.covariates, args.dump_trial)
        elif args.command == "compare":
            designs = _designs(args.designs, config)
            rows, label, stem = compare_designs(config, designs, reps, seed, args.workers), "design", "compare"
        else:
            rows = power_curve(config, _effects(args.effects), reps, seed, args.workers)
            label, stem = "responder_effect", "power_curve"
        path = emit_report(rows, args.out, args.format, stem, label)
    except UsageError as exc:
        print(f"twostage: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"twostage: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplicationError as exc:
        print(f"twostage: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"twostage: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    _print_rows(rows, label)
    print(f"wrote {path}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
