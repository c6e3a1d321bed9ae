"""Command-line interface.

Exit codes: 0 on success, 1 if any experiment row reports an error, 2 for an
invalid configuration or arguments.
"""

import argparse
import json
import sys

from .coarsen import CoarsenConfig, SAParams, partition, save_partition
from .harness import (PRESETS, BoundParams, ConfigError, load_config, run_experiment,
                      theory_bound, write_csv)
from .hierarchy import classical_epsilon
from .mmio import mm_read, mm_write
from .problems import build_matrix, problem_from_dict

EXIT_OK, EXIT_ROW_ERROR, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--out", help="output path (stdout if omitted)")
    p.add_argument("--threads", type=int, default=1, help="rows run concurrently")


def build_parser():
    ap = argparse.ArgumentParser(prog="amgr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="problem config -> Matrix Market file")
    _common(p)
    p.add_argument("--symmetric", action="store_true", help="store the lower triangle only")

    p = sub.add_parser("coarsen", help="Matrix Market file -> F/C partition file")
    _common(p)
    p.add_argument("matrix", help="Matrix Market input")
    p.add_argument("--eta", type=float, default=0.65)
    p.add_argument("--method", choices=("greedy", "annealed"), default="greedy")

    p = sub.add_parser("solve", help="experiment config -> CSV")
    _common(p)

    p = sub.add_parser("tables", help="named presets -> CSV")
    _common(p)
    p.add_argument("names", nargs="+", metavar="NAME",
                   help=f"preset names or 'all' ({', '.join(PRESETS)})")

    p = sub.add_parser("bound", help="two-level convergence bound")
    _common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--eta", type=float, help="derive epsilon from the dominance threshold")
    p.add_argument("--nu", type=int, default=1)
    return ap


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_reports(reports, out):
    _emit(write_csv(reports), out)
    failed = [r for r in reports if r.error]
    for r in failed:
        print(f"error in {r.echo.get('problem')} {r.echo.get('grid')}: {r.error}",
              file=sys.stderr)
    return EXIT_ROW_ERROR if failed else EXIT_OK


def _generate(args):
    if not args.config:
        raise ConfigError("generate needs --config")
    cfg = load_config(args.config)
    try:
        spec = problem_from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    A = build_matrix(spec)
    if not args.out:
        raise ConfigError("generate needs --out")
    mm_write(args.out, A, symmetric=args.symmetric, comment=json.dumps(cfg))
    return EXIT_OK


def _coarsen(args):
    try:
        cfg = CoarsenConfig(eta=args.eta, method=args.method,
                            sa_params=SAParams(seed=args.seed or 0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    part = partition(mm_read(args.matrix), cfg)
    if args.out:
        save_partition(args.out, part)
    else:
        print(" ".join(map(str, part.f_set)))
        print(" ".join(map(str, part.c_set)))
    print(f"|F| = {part.f_set.size}, |C| = {part.c_set.size}", file=sys.stderr)
    return EXIT_OK


def _solve(args):
    if not args.config:
        raise ConfigError("solve needs --config")
    return _run_reports(run_experiment(load_config(args.config), args.seed, args.threads),
                        args.out)


def _tables(args):
    names = list(PRESETS) if args.names == ["all"] else args.names
    reports = []
    for name in names:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
    for name in names:
        reports += run_experiment(name, args.seed, args.threads)
    return _run_reports(reports, args.out)


def _bound(args):
    if args.epsilon is None:
        if not 0.5 < args.eta <= 1.0:
            raise ConfigError("eta must lie in (1/2, 1]")
        eps = classical_epsilon(args.eta)
    else:
        eps = args.epsilon
    try:
        value = theory_bound(BoundParams(eps, args.nu))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(f"{value:.12g}\n", args.out)
    return EXIT_OK


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    handler = {"generate": _generate, "coarsen": _coarsen, "solve": _solve,
               "tables": _tables, "bound": _bound}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
