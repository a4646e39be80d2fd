"""Command-line front end.

::

    yosida-bdsde run SPEC [--seed S] [--out DIR] [--mode tree|mc] [--paths M]
    yosida-bdsde suite SELECTOR [--seed S]
    yosida-bdsde catalog list

``SPEC`` is a config file or the name of a built-in problem. Exit codes:
0 all checks pass, 1 a check failed, 2 invalid input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import BDSDEError, InvalidArgumentError, NumericFailureError
from .experiment import (BUILTIN, ConfigError, builtin, describe_catalog,
                         load_spec, run_experiment, run_property_suite,
                         with_overrides)
from .experiment.runner import (EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERIC,
                                EXIT_OK)
from .experiment.suite import SELECTORS

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which matches "invalid input"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="yosida-bdsde", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment and write CSV reports")
    run.add_argument("spec", help="config file or built-in problem name")
    run.add_argument("--seed", type=int, help="override the seed")
    run.add_argument("--out", help="root output directory (default: spec's, else ./out)")
    run.add_argument("--mode", choices=("tree", "mc"), help="override the sampling mode")
    run.add_argument("--paths", type=int, metavar="M", help="number of Monte Carlo paths")
    run.add_argument("--max-paths", type=int, default=1000,
                     help="paths written to solution.csv (default 1000)")

    suite = sub.add_parser("suite", help="run invariant suites")
    suite.add_argument("selector", help=f"one of {', '.join(SELECTORS)}, all")
    suite.add_argument("--seed", type=int, default=0)

    cat = sub.add_parser("catalog", help="list built-in problems and ids")
    cat.add_argument("action", choices=("list",))
    return p


def _resolve(spec_arg):
    if spec_arg in BUILTIN and not Path(spec_arg).is_file():
        return builtin(spec_arg)
    return load_spec(spec_arg)


def _cmd_run(args):
    spec = _resolve(args.spec)
    spec = with_overrides(spec, seed=args.seed, mode=args.mode, paths=args.paths)
    res = run_experiment(spec, out=args.out, max_paths=args.max_paths)
    for k, ok in res.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {k}")
    if res.status == EXIT_NUMERIC:
        print(f"numeric failure: {res.values.get('error')}", file=sys.stderr)
    print(f"wrote {len(res.files)} files to {res.directory}")
    return res.status


def _cmd_suite(args):
    rep = run_property_suite(args.selector, args.seed)
    print(rep.text())
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "suite":
            return _cmd_suite(args)
        print(describe_catalog())
        return EXIT_OK
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BDSDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
