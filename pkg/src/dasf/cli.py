"""Command-line entry point: ``dasf run|compare|certify|report``."""

from __future__ import annotations

import argparse
import sys
import warnings

from . import harness
from .errors import ConfigError, DasfError

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _parse_solver(text):
    """``kind`` or ``kind:n_iter`` -> (SolverConfig, label)."""
    from .solvers import SolverConfig

    kind, _, n = text.partition(":")
    try:
        solver = SolverConfig(kind=kind, n_iter=int(n) if n else 1)
    except ValueError as exc:
        raise ConfigError(f"invalid solver '{text}': {exc}", "--solvers") from None
    return solver, harness.solver_label(solver)


def build_parser():
    parser = argparse.ArgumentParser(prog="dasf", description="Distributed adaptive signal fusion experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True,
                           help="scenario YAML file or shipped scenario name (%s)" % ", ".join(harness.shipped_scenarios()))
            p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
            p.add_argument("--budget-override", type=int, default=None, help="replace the iteration budget")
            p.add_argument("--seed-override", type=int, default=None, help="replace the base seed")
        p.add_argument("--out", default=None, help="output directory")

    common(sub.add_parser("run", help="run a Monte-Carlo ensemble"))
    p = sub.add_parser("compare", help="paired ensembles for several solvers")
    common(p)
    p.add_argument("--solvers", nargs="+", default=None, metavar="KIND[:N]",
                   help="solvers to compare, e.g. power:1 power:10 gevd")
    common(sub.add_parser("certify", help="check the solver contract on random local problems"))
    common(sub.add_parser("report", help="re-aggregate existing traces"), config=False)
    return parser


def _scenario(args):
    scenario = harness.load_scenario(args.config)
    if args.budget_override is not None:
        if args.budget_override < 0:
            raise ConfigError("--budget-override must be non-negative", "--budget-override")
        scenario.budget = args.budget_override
    if args.seed_override is not None:
        if args.seed_override < 0:
            raise ConfigError("--seed-override must be non-negative", "--seed-override")
        scenario.seed = args.seed_override
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be positive", "--workers")
        scenario.workers = args.workers
    return scenario


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "report":
            if args.out is None:
                raise ConfigError("report needs --out pointing at an experiment directory", "--out")
            harness.report(args.out)
            return EXIT_OK
        scenario = _scenario(args)
        if args.verb == "run":
            status = harness.run_experiment(scenario, args.out)
        elif args.verb == "compare":
            solvers = None if args.solvers is None else [_parse_solver(s) for s in args.solvers]
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                status, _ = harness.compare_solvers(scenario, solvers, args.out)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
        else:
            status = harness.certify_experiment(scenario, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DasfError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return status


if __name__ == "__main__":
    sys.exit(main())
