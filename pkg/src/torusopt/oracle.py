"""Brute-force reference answers and the cross-validation suite.

The oracle answers fibre questions the slow, trustworthy way: scan a dense
grid over the whole fibre, refine what it finds with Newton polish, and
report everything within a value tolerance of the best. It shares no logic
with the table/tracking pipeline beyond the Newton polish routine, so
agreement between the two is meaningful evidence rather than an identity.

run_invariant_suite turns the structural guarantees (constant fibre count,
one Morse index per component, monodromy closure, oracle agreement) into a
deterministic seeded report with counterexample base points on failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateCriticalPointError,
    InvalidInputError,
    TorusOptError,
)
from .geometry import TWO_PI, AngleVec, ParameterPath, geodesic_delta_array, wrap
from .newton import newton_polish_chart
from .problems import EvalCounter, ProblemDefinition

__all__ = [
    "OracleCriticalPoint",
    "OracleResult",
    "InvariantCheck",
    "SuiteReport",
    "oracle_fibre_minimum",
    "oracle_critical_points",
    "run_invariant_suite",
]

ORACLE_DEDUP_RADIUS = 1e-8
ORACLE_POLISH_TOL = 1e-11


@dataclass(frozen=True)
class OracleCriticalPoint:
    """A critical point found by dense scanning, with its Morse index."""

    x: AngleVec
    index: int


@dataclass(frozen=True)
class OracleResult:
    """Brute-force answer for one fibre.

    evaluations counts cost-value callback invocations only (batch calls
    count one per row); gradient and Hessian calls during polish are not
    included.
    """

    minimizers: tuple[AngleVec, ...]
    min_value: float
    critical_points: tuple[OracleCriticalPoint, ...]
    evaluations: int


def _morse_index_local(hessian: np.ndarray) -> int:
    """Negative-eigenvalue count, independent of the pipeline's classifier."""
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    eigs = np.linalg.eigvalsh(0.5 * (H + H.T))
    norm = float(np.max(np.abs(eigs)))
    if norm == 0.0 or float(np.min(np.abs(eigs))) < 1e-9 * norm:
        raise DegenerateCriticalPointError(
            f"oracle found a degenerate critical point (spectrum {eigs.tolist()})"
        )
    return int(np.sum(eigs < 0.0))


def _grid_points(k: int, per_dim: int) -> np.ndarray:
    axes = [np.linspace(0.0, TWO_PI, per_dim, endpoint=False) for _ in range(k)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _values_on_grid(
    problem: ProblemDefinition, points: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    if problem.vectorized:
        return np.asarray(problem.value(points, theta), dtype=float).reshape(-1)
    return np.asarray(
        [float(problem.value(p, theta)) for p in points], dtype=float
    )


def _grid_local_minima(values: np.ndarray, k: int, per_dim: int) -> np.ndarray:
    """Flat indices of nodes strictly below all 2k lattice neighbours."""
    lattice = values.reshape([per_dim] * k)
    mask = np.ones_like(lattice, dtype=bool)
    for axis in range(k):
        mask &= lattice < np.roll(lattice, 1, axis=axis)
        mask &= lattice < np.roll(lattice, -1, axis=axis)
    return np.flatnonzero(mask.ravel())


def _polish_and_dedup(
    problem: ProblemDefinition, theta: np.ndarray, seeds: np.ndarray
) -> list[AngleVec]:
    def grad(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_grad(x, theta), dtype=float)

    def hess(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_hess(x, theta), dtype=float)

    accepted: list[AngleVec] = []
    for seed in seeds:
        try:
            report = newton_polish_chart(
                grad, hess, seed, tol=ORACLE_POLISH_TOL, max_iter=60
            )
        except DegenerateCriticalPointError:
            continue
        if not report.converged:
            continue
        cand = wrap(report.final_x)
        dup = any(
            float(
                np.linalg.norm(geodesic_delta_array(cand.array, prev.array))
            )
            < ORACLE_DEDUP_RADIUS
            for prev in accepted
        )
        if not dup:
            accepted.append(cand)
    return accepted


def oracle_fibre_minimum(
    problem: ProblemDefinition,
    theta: AngleVec,
    grid_per_dim: int = 16384,
    value_tol: float = 1e-7,
) -> OracleResult:
    """Global fibre minimisers by dense scan plus Newton refinement.

    Scans grid_per_dim^k nodes, polishes every grid-local minimum, and
    returns all refined minima within value_tol of the best. The
    critical_points field lists exactly those refined minima (index 0);
    the full critical inventory comes from oracle_critical_points.
    """
    if grid_per_dim < 256:
        raise InvalidInputError(
            f"oracle grid_per_dim must be >= 256, got {grid_per_dim}"
        )
    if value_tol <= 0.0:
        raise InvalidInputError(f"value_tol must be positive, got {value_tol}")
    k = problem.shape.fibre_dim
    counter = EvalCounter(problem)
    counted = counter.problem
    theta_arr = theta.array
    points = _grid_points(k, grid_per_dim)
    values = _values_on_grid(counted, points, theta_arr)
    seed_idx = _grid_local_minima(values, k, grid_per_dim)
    if seed_idx.size == 0:
        seed_idx = np.asarray([int(np.argmin(values))])
    candidates = _polish_and_dedup(counted, theta_arr, points[seed_idx])
    if not candidates:
        candidates = [wrap(points[int(np.argmin(values))])]
    cand_values = [
        float(counted.value(c.array, theta_arr)) for c in candidates
    ]
    best = min(cand_values)
    winners = sorted(
        (c for c, v in zip(candidates, cand_values) if v <= best + value_tol),
        key=lambda c: c.coords,
    )
    return OracleResult(
        minimizers=tuple(winners),
        min_value=best,
        critical_points=tuple(OracleCriticalPoint(x=c, index=0) for c in winners),
        evaluations=counter.counts["value"],
    )


def oracle_critical_points(
    problem: ProblemDefinition, theta: AngleVec, grid_per_dim: int = 16384
) -> list[OracleCriticalPoint]:
    """All fibre critical points by dense scanning, classified and sorted.

    On one-dimensional fibres, gradient sign changes between consecutive
    nodes (wrap included) bracket every root; higher-dimensional fibres
    fall back to polishing from every node of a coarser lattice.
    """
    if grid_per_dim < 16:
        raise InvalidInputError(
            f"oracle grid_per_dim must be >= 16, got {grid_per_dim}"
        )
    k = problem.shape.fibre_dim
    theta_arr = theta.array
    points = _grid_points(k, grid_per_dim)
    if k == 1:
        if problem.vectorized:
            g = np.asarray(
                problem.fibre_grad(points, theta_arr), dtype=float
            ).reshape(-1)
        else:
            g = np.asarray(
                [float(np.asarray(problem.fibre_grad(p, theta_arr))) for p in points]
            )
        g_next = np.roll(g, -1)
        crossing = (g * g_next < 0.0) | (g == 0.0)
        seeds = points[np.flatnonzero(crossing)]
    else:
        seeds = points
    candidates = _polish_and_dedup(problem, theta_arr, seeds)
    out = []
    for c in candidates:
        H = np.asarray(problem.fibre_hess(c.array, theta_arr), dtype=float)
        out.append(OracleCriticalPoint(x=c, index=_morse_index_local(H)))
    out.sort(key=lambda p: p.x.coords)
    return out


# --------------------------------------------------------------------------
# Invariant suite
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantCheck:
    """One named invariant with its verdict and any counterexample fibres."""

    name: str
    passed: bool
    detail: str
    counterexamples: tuple[AngleVec, ...] = ()


@dataclass(frozen=True)
class SuiteReport:
    passed: bool
    entries: tuple[InvariantCheck, ...]

    def entry(self, name: str) -> InvariantCheck:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


MAX_COUNTEREXAMPLES = 5


def _check_constant_count(problem, table, thetas) -> InvariantCheck:
    from .tables import enumerate_fibre_critical_points

    expected = table.per_fibre_count
    bad: list[AngleVec] = []
    for th in thetas:
        theta = wrap(th)
        try:
            found = len(
                enumerate_fibre_critical_points(
                    problem, theta, table.build.fibre_grid_per_dim, table.build.tol
                )
            )
        except TorusOptError:
            found = -1
        if found != expected and len(bad) < MAX_COUNTEREXAMPLES:
            bad.append(theta)
    detail = (
        f"expected {expected} critical points on every fibre, "
        f"checked {len(thetas)} random base points"
    )
    return InvariantCheck(
        name="constant-count",
        passed=not bad,
        detail=detail,
        counterexamples=tuple(bad),
    )


def _check_index_constancy(problem, table) -> InvariantCheck:
    bad: list[AngleVec] = []
    messages: list[str] = []
    per_anchor_comp: dict[tuple[int, int], int] = {}
    for r in table.records:
        theta = table.anchors[r.anchor_index]
        comp = table.topology.component(r.component_id)
        per_anchor_comp[(r.anchor_index, r.component_id)] = (
            per_anchor_comp.get((r.anchor_index, r.component_id), 0) + 1
        )
        recomputed = None
        try:
            H = np.asarray(problem.fibre_hess(r.x.array, theta.array), dtype=float)
            recomputed = _morse_index_local(H)
        except DegenerateCriticalPointError:
            pass
        if r.index != comp.morse_index or recomputed != r.index:
            if len(bad) < MAX_COUNTEREXAMPLES:
                bad.append(theta)
                messages.append(
                    f"record x={r.x.coords} at anchor {r.anchor_index}: stored index "
                    f"{r.index}, component index {comp.morse_index}, "
                    f"recomputed {recomputed}"
                )
    for comp in table.topology.components:
        for a in range(len(table.anchors)):
            n = per_anchor_comp.get((a, comp.component_id), 0)
            if n != comp.intersections_per_fibre and len(bad) < MAX_COUNTEREXAMPLES:
                bad.append(table.anchors[a])
                messages.append(
                    f"component {comp.component_id} meets anchor {a} fibre "
                    f"{n} times, expected {comp.intersections_per_fibre}"
                )
    detail = "; ".join(messages) if messages else (
        f"all {len(table.records)} records match their component's Morse index"
    )
    return InvariantCheck(
        name="index-constancy",
        passed=not bad,
        detail=detail,
        counterexamples=tuple(bad),
    )


def _check_monodromy(problem, table) -> InvariantCheck:
    from .tracking import track_point

    m = table.shape.base_dim
    anchor0 = table.anchors[0]
    bad: list[AngleVec] = []
    messages: list[str] = []
    for comp in table.topology.components:
        rec0 = next(
            r
            for r in table.records
            if r.anchor_index == 0 and r.component_id == comp.component_id
        )
        for axis in range(m):
            delta = [0.0] * m
            delta[axis] = TWO_PI
            loop = ParameterPath(start=anchor0, delta=tuple(delta))
            current = rec0
            try:
                for _ in range(comp.intersections_per_fibre):
                    lifted = track_point(
                        problem, current, loop, table.bounds, table.build.tol
                    )
                    current = replace(rec0, x=lifted.end_x)
            except TorusOptError as exc:
                bad.append(anchor0)
                messages.append(
                    f"component {comp.component_id} axis {axis}: {exc}"
                )
                continue
            dist = float(
                np.linalg.norm(
                    geodesic_delta_array(current.x.array, rec0.x.array)
                )
            )
            if dist > 1e-8:
                bad.append(anchor0)
                messages.append(
                    f"component {comp.component_id} axis {axis}: "
                    f"{comp.intersections_per_fibre} loops return {dist:.3e} away"
                )
    detail = "; ".join(messages) if messages else (
        "every component closes after its intersection count of generator loops"
    )
    return InvariantCheck(
        name="monodromy-closure",
        passed=not bad,
        detail=detail,
        counterexamples=tuple(bad),
    )


def _check_oracle_agreement(
    problem, table, thetas, oracle_grid: int
) -> InvariantCheck:
    from .tracking import query

    bad: list[AngleVec] = []
    messages: list[str] = []
    for th in thetas:
        theta = wrap(th)
        try:
            result = query(table, problem, theta)
        except TorusOptError as exc:
            if len(bad) < MAX_COUNTEREXAMPLES:
                bad.append(theta)
                messages.append(f"query failed at theta={theta.coords}: {exc}")
            continue
        reference = oracle_fibre_minimum(
            problem, theta, oracle_grid, table.build.value_tol
        )
        value_gap = abs(result.f_value - reference.min_value)
        solver_xs = [b.x for b in result.minimizers]
        matched = _sets_match(solver_xs, list(reference.minimizers), 1e-6)
        if (value_gap > 1e-8 or not matched) and len(bad) < MAX_COUNTEREXAMPLES:
            bad.append(theta)
            messages.append(
                f"theta={theta.coords}: value gap {value_gap:.3e}, "
                f"solver {[x.coords for x in solver_xs]}, "
                f"oracle {[x.coords for x in reference.minimizers]}"
            )
    detail = "; ".join(messages) if messages else (
        f"solver matches the dense-grid oracle at {len(thetas)} random base points"
    )
    return InvariantCheck(
        name="oracle-agreement",
        passed=not bad,
        detail=detail,
        counterexamples=tuple(bad),
    )


def _sets_match(a: list[AngleVec], b: list[AngleVec], tol: float) -> bool:
    def covered(xs: list[AngleVec], ys: list[AngleVec]) -> bool:
        return all(
            any(
                float(np.linalg.norm(geodesic_delta_array(x.array, y.array))) <= tol
                for y in ys
            )
            for x in xs
        )

    return covered(a, b) and covered(b, a)


def run_invariant_suite(
    problem: ProblemDefinition,
    table,
    seed: int = 0,
    *,
    count_samples: int = 200,
    agreement_samples: int = 500,
    oracle_grid: int | None = None,
) -> SuiteReport:
    """Deterministic seeded cross-validation of a table against the oracle.

    Four entries: constant-count (fibre enumeration finds the tabled number
    of critical points at random base points), index-constancy (records
    match their component's Morse index, recomputed from the Hessian),
    monodromy-closure (components close after their intersection count of
    generator loops), and oracle-agreement (query results match dense-grid
    answers). Counterexample base points are capped at 5 per entry.
    """
    if count_samples < 1 or agreement_samples < 1:
        raise InvalidInputError("sample counts must be >= 1")
    if oracle_grid is None:
        oracle_grid = 16384 if problem.shape.fibre_dim == 1 else 256
    rng = np.random.default_rng(seed)
    m = table.shape.base_dim
    count_thetas = rng.uniform(0.0, TWO_PI, size=(count_samples, m))
    agree_thetas = rng.uniform(0.0, TWO_PI, size=(agreement_samples, m))
    entries = (
        _check_constant_count(problem, table, count_thetas),
        _check_index_constancy(problem, table),
        _check_monodromy(problem, table),
        _check_oracle_agreement(problem, table, agree_thetas, oracle_grid),
    )
    return SuiteReport(passed=all(e.passed for e in entries), entries=entries)
