"""Command-line front end: problems, tables build, solve, validate, bench.

Exit codes are stable and documented: 0 success, 2 configuration or usage
errors (argparse uses 2 as well), 3 I/O and table-file errors, 4 degeneracy
or consistency failures, 5 tracking failures, 6 validation-suite failures.
Identical config and seed give byte-identical table files and identical
solve output; bench additionally prints wall times, which vary.
"""

from __future__ import annotations

import argparse
import json
import re
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, load_run_config, to_build_config
from .errors import (
    CorruptTableError,
    DegenerateCriticalPointError,
    InconsistencyError,
    InvalidConfigError,
    InvalidInputError,
    InvalidProblemError,
    ResolutionTooCoarseError,
    TableMismatchError,
    TorusOptError,
    TrackingFailedError,
    UnsupportedVersionError,
)
from .geometry import TWO_PI, AngleVec, wrap
from .oracle import oracle_fibre_minimum, run_invariant_suite
from .problems import CATALOG, get_catalog_problem
from .tables import (
    build_table,
    count_single_component_zones,
    load_table,
    save_table,
)
from .tracking import query, query_stream

__all__ = ["main", "console_main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4
EXIT_TRACKING = 5
EXIT_VALIDATION = 6


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (CorruptTableError, UnsupportedVersionError, OSError)):
        return EXIT_IO
    if isinstance(
        exc,
        (DegenerateCriticalPointError, ResolutionTooCoarseError, InconsistencyError),
    ):
        return EXIT_DEGENERATE
    if isinstance(exc, TrackingFailedError):
        return EXIT_TRACKING
    if isinstance(
        exc,
        (InvalidConfigError, InvalidInputError, InvalidProblemError, TableMismatchError),
    ):
        return EXIT_CONFIG
    return EXIT_CONFIG


def _g(v: float) -> str:
    return "%.12g" % float(v)


def _coords(a: AngleVec) -> str:
    return ",".join(_g(c) for c in a.coords)


def _load_cfg(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_problems_list(args: argparse.Namespace) -> int:
    entries = []
    for name, entry in CATALOG.items():
        problem = entry.factory()
        entries.append(
            {
                "name": name,
                "fibre_dim": problem.shape.fibre_dim,
                "base_dim": problem.shape.base_dim,
                "params": dict(problem.params),
                "notes": entry.notes,
            }
        )
    if args.json:
        print(json.dumps(entries, indent=2, sort_keys=True))
    else:
        for e in entries:
            print(
                f"{e['name']}: fibre_dim={e['fibre_dim']} "
                f"base_dim={e['base_dim']} {e['notes']}"
            )
    return EXIT_OK


def cmd_tables_build(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    cfg = apply_overrides(
        cfg,
        problem=args.problem,
        anchors_per_dim=args.anchors,
        fibre_grid_per_dim=args.fibre_grid,
        region_grid_per_dim=args.region_grid,
        tol=args.tol,
        value_tol=args.value_tol,
        seed=args.seed,
        table_out=args.out,
    )
    if cfg.problem is None:
        raise InvalidConfigError("no problem named (use --problem or a config file)")
    if cfg.table_out is None:
        raise InvalidConfigError("no output path (use --out or a config file)")
    problem = get_catalog_problem(cfg.problem)
    table = build_table(problem, to_build_config(cfg))
    save_table(table, cfg.table_out)
    topo = table.topology
    b_list = ",".join(str(c.intersections_per_fibre) for c in topo.components)
    zones = count_single_component_zones(table.regions)
    print(
        f"{topo.num_components} components; b=[{b_list}]; "
        f"min components: {len(topo.min_component_ids)}; region zones: {zones}"
    )
    print(f"wrote {cfg.table_out}")
    return EXIT_OK


def _parse_theta(text: str) -> AngleVec:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise InvalidInputError("empty theta value")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise InvalidInputError(f"unreadable theta value: {text!r}") from None
    return wrap(np.asarray(values, dtype=float))


def _collect_thetas(args: argparse.Namespace) -> list[AngleVec]:
    thetas: list[AngleVec] = []
    for text in args.theta or []:
        thetas.append(_parse_theta(text))
    if args.theta_file:
        for line in Path(args.theta_file).read_text(encoding="utf-8").splitlines():
            if line.strip():
                thetas.append(_parse_theta(line))
    if not thetas:
        raise InvalidConfigError("no theta inputs (use --theta or --theta-file)")
    return thetas


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    cfg = apply_overrides(cfg, mode=args.mode, table_in=args.table)
    if cfg.table_in is None:
        raise InvalidConfigError("no table path (use --table or a config file)")
    table = load_table(cfg.table_in)
    problem = get_catalog_problem(table.problem_name)
    thetas = _collect_thetas(args)
    outcomes = query_stream(table, problem, thetas, cfg.mode)
    first_error: TorusOptError | None = None
    for outcome in outcomes:
        theta_s = _coords(outcome.theta)
        if outcome.ok:
            res = outcome.result
            x_s = ";".join(_coords(b.x) for b in res.minimizers)
            ev = res.evaluations
            certified = "yes" if res.all_steps_certified else "no"
            print(
                f"theta={theta_s} x={x_s} f={_g(res.f_value)} "
                f"value_evals={ev.value} grad_evals={ev.grad} "
                f"hess_evals={ev.hess} certified={certified}"
            )
        else:
            if first_error is None:
                first_error = outcome.error
            print(
                f"theta={theta_s} error={type(outcome.error).__name__}: {outcome.error}"
            )
    return EXIT_OK if first_error is None else _exit_code_for(first_error)


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    cfg = apply_overrides(cfg, table_in=args.table, seed=args.seed)
    if cfg.table_in is None:
        raise InvalidConfigError("no table path (use --table or a config file)")
    if args.samples is not None and args.samples < 1:
        raise InvalidConfigError(f"samples must be >= 1, got {args.samples}")
    samples = args.samples if args.samples is not None else 500
    table = load_table(cfg.table_in)
    problem = get_catalog_problem(table.problem_name)
    report = run_invariant_suite(
        problem,
        table,
        seed=cfg.seed,
        count_samples=min(samples, 200),
        agreement_samples=samples,
    )
    for entry in report.entries:
        status = "PASS" if entry.passed else "FAIL"
        print(f"{entry.name}: {status} ({entry.detail})")
        for theta in entry.counterexamples:
            print(f"  counterexample theta={_coords(theta)}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    cfg = apply_overrides(cfg, table_in=args.table, seed=args.seed, mode=args.mode)
    if cfg.table_in is None:
        raise InvalidConfigError("no table path (use --table or a config file)")
    if args.n < 0:
        raise InvalidConfigError(f"query count must be >= 0, got {args.n}")
    print(f"queries: {args.n}")
    if args.n == 0:
        return EXIT_OK
    table = load_table(cfg.table_in)
    problem = get_catalog_problem(table.problem_name)
    rng = np.random.default_rng(cfg.seed)
    thetas = rng.uniform(0.0, TWO_PI, size=(args.n, table.shape.base_dim))

    values, grads, hesses, steps, paths, walls = [], [], [], [], [], []
    for row in thetas:
        theta = wrap(row)
        t0 = time.perf_counter()
        res = query(table, problem, theta, cfg.mode)
        walls.append((time.perf_counter() - t0) * 1000.0)
        values.append(res.evaluations.value)
        grads.append(res.evaluations.grad)
        hesses.append(res.evaluations.hess)
        steps.append(sum(len(p.samples) - 1 for p in res.tracked))
        paths.append(len(res.tracked))

    def stats_line(label: str, xs: list[float]) -> None:
        print(
            f"{label}: mean={statistics.fmean(xs):.6g} "
            f"median={statistics.median(xs):.6g} max={max(xs):.6g}"
        )

    print(f"mode: {cfg.mode}")
    stats_line("value evals", values)
    stats_line("grad evals", grads)
    stats_line("hess evals", hesses)
    stats_line("steps per query", steps)
    stats_line("paths per query", paths)
    stats_line("wall ms", walls)

    oracle_grid = 16384 if table.shape.fibre_dim == 1 else 256
    probe = min(args.n, 20)
    oracle_evals = [
        oracle_fibre_minimum(
            problem, wrap(thetas[i]), oracle_grid, table.build.value_tol
        ).evaluations
        for i in range(probe)
    ]
    oracle_mean = statistics.fmean(oracle_evals)
    ratio = oracle_mean / statistics.fmean(values)
    print(f"oracle value evals (grid {oracle_grid}): mean={oracle_mean:.6g}")
    print(f"efficiency ratio: {ratio:.1f}x")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusopt",
        description="Fibre-wise optimisation on torus bundles: "
        "precomputed tables plus certified online tracking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_problems = sub.add_parser("problems", help="catalog information")
    problems_sub = p_problems.add_subparsers(dest="subcommand", required=True)
    p_list = problems_sub.add_parser("list", help="list catalog problems")
    p_list.add_argument("--json", action="store_true", help="machine-readable output")
    p_list.set_defaults(func=cmd_problems_list)

    p_tables = sub.add_parser("tables", help="offline table operations")
    tables_sub = p_tables.add_subparsers(dest="subcommand", required=True)
    p_build = tables_sub.add_parser("build", help="build and write a table")
    p_build.add_argument("--config", help="JSON config file")
    p_build.add_argument("--problem", help="catalog problem name")
    p_build.add_argument("--out", help="output table path")
    p_build.add_argument("--anchors", type=int, help="anchor fibres per base dim")
    p_build.add_argument("--fibre-grid", type=int, dest="fibre_grid",
                         help="fibre seed nodes per dim")
    p_build.add_argument("--region-grid", type=int, dest="region_grid",
                         help="region map cells per base dim")
    p_build.add_argument("--tol", type=float, help="gradient tolerance")
    p_build.add_argument("--value-tol", type=float, dest="value_tol",
                         help="tie tolerance on cost values")
    p_build.add_argument("--seed", type=int, help="run seed")
    p_build.set_defaults(func=cmd_tables_build)

    p_solve = sub.add_parser("solve", help="query minimisers at base points")
    p_solve.add_argument("--config", help="JSON config file")
    p_solve.add_argument("--table", help="table file path")
    p_solve.add_argument("--theta", action="append",
                         help="base point, comma or space separated (repeatable)")
    p_solve.add_argument("--theta-file", dest="theta_file",
                         help="file of base points, one vector per line")
    p_solve.add_argument("--mode", choices=("track-all-minima", "region-guided"),
                         help="tracking mode")
    p_solve.set_defaults(func=cmd_solve)

    p_validate = sub.add_parser("validate", help="run the invariant suite")
    p_validate.add_argument("--config", help="JSON config file")
    p_validate.add_argument("--table", help="table file path")
    p_validate.add_argument("--seed", type=int, help="suite seed")
    p_validate.add_argument("--samples", type=int,
                            help="random base points for the oracle comparison")
    p_validate.set_defaults(func=cmd_validate)

    p_bench = sub.add_parser("bench", help="per-query statistics")
    p_bench.add_argument("--config", help="JSON config file")
    p_bench.add_argument("--table", help="table file path")
    p_bench.add_argument("--n", type=int, default=100, help="number of queries")
    p_bench.add_argument("--seed", type=int, help="query seed")
    p_bench.add_argument("--mode", choices=("track-all-minima", "region-guided"),
                         help="tracking mode")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TorusOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
