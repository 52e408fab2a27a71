"""Online stage: certified homotopy tracking from anchor fibres to query fibres.

A query for the minimisers at a base point theta walks a geodesic from the
nearest anchor, carrying each relevant table record along the path with a
predictor-corrector loop. Steps are sized a priori from the certified Newton
radius and the mixed-derivative bound, so a first-attempt step lands inside
the corrector's basin by construction and is marked certified. When a step
has to be halved, an a-posteriori averaged-Hessian certificate can restore
the certified mark; otherwise the sample is carried uncertified and the
query result says so.

A corrector that converges onto a point with a different Morse index has
jumped branches, which no amount of step shrinking can excuse; that raises
InconsistencyError. Step-size underflow raises TrackingFailedError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateCriticalPointError,
    InconsistencyError,
    InvalidConfigError,
    InvalidInputError,
    TableMismatchError,
    TorusOptError,
    TrackingFailedError,
)
from .geometry import (
    AngleVec,
    BundlePoint,
    ParameterPath,
    geodesic_delta_array,
    geodesic_path,
    wrap,
)
from .newton import (
    COND_LIMIT,
    CertifiedRadius,
    averaged_hessian,
    averaged_hessian_test,
    certified_radius_nd,
    newton_polish_chart,
    symmetric_spectrum,
)
from .problems import DerivativeBounds, EvalCounter, ProblemDefinition
from .tables import CriticalPointRecord, PrecomputedTable, classify_index

__all__ = [
    "MIN_STEP_FRACTION",
    "PathSample",
    "LiftedPath",
    "EvalCounts",
    "SolveResult",
    "QueryOutcome",
    "nearest_anchor",
    "nearest_anchor_index",
    "plan_path",
    "step_size_bound",
    "track_point",
    "query",
    "query_stream",
]

# A parameter step smaller than this fraction of the path aborts tracking.
MIN_STEP_FRACTION = 1e-9

QUERY_MODES = ("track-all-minima", "region-guided")


@dataclass(frozen=True)
class PathSample:
    """One accepted point of a lifted path."""

    t: float
    x: AngleVec
    certified: bool


@dataclass(frozen=True)
class LiftedPath:
    """A critical-point branch carried along one parameter path."""

    component_id: int
    start: CriticalPointRecord
    samples: tuple[PathSample, ...]

    def __post_init__(self) -> None:
        if not self.samples:
            raise InvalidInputError("a lifted path needs at least one sample")
        ts = [s.t for s in self.samples]
        if ts[0] != 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError(f"sample parameters not increasing from 0: {ts}")

    @property
    def end_x(self) -> AngleVec:
        return self.samples[-1].x

    @property
    def all_certified(self) -> bool:
        return all(s.certified for s in self.samples)


@dataclass(frozen=True)
class EvalCounts:
    """Callback invocation totals accumulated over a query."""

    value: int
    grad: int
    hess: int
    mixed: int = 0


@dataclass(frozen=True)
class SolveResult:
    """Minimisers at a query fibre plus the work it took to find them."""

    minimizers: tuple[BundlePoint, ...]
    f_value: float
    tracked: tuple[LiftedPath, ...]
    evaluations: EvalCounts
    all_steps_certified: bool


@dataclass(frozen=True)
class QueryOutcome:
    """Per-item outcome of a streamed query: a result or a recorded failure."""

    theta: AngleVec
    result: SolveResult | None
    error: TorusOptError | None

    @property
    def ok(self) -> bool:
        return self.error is None


def nearest_anchor_index(anchors: Sequence[AngleVec], theta: AngleVec) -> int:
    """Index of the anchor closest to theta; ties pick the smallest index."""
    arr = np.asarray([a.array for a in anchors])
    deltas = geodesic_delta_array(arr, np.broadcast_to(theta.array, arr.shape))
    dists = np.linalg.norm(deltas, axis=1)
    return int(np.argmin(dists))


def nearest_anchor(table: PrecomputedTable, theta: AngleVec) -> int:
    if theta.dim != table.shape.base_dim:
        raise InvalidInputError(
            f"theta has dimension {theta.dim}, table base is {table.shape.base_dim}"
        )
    return nearest_anchor_index(table.anchors, theta)


def plan_path(
    table: PrecomputedTable, anchor_theta: AngleVec, theta: AngleVec
) -> ParameterPath:
    """Geodesic from an anchor to the query point."""
    if anchor_theta.dim != table.shape.base_dim or theta.dim != table.shape.base_dim:
        raise InvalidInputError("path endpoints must match the table base dimension")
    return geodesic_path(anchor_theta, theta)


def step_size_bound(
    rho: CertifiedRadius | float, hess_inv_norm: float, beta: float
) -> float:
    """Largest parameter step that keeps the predicted point in the basin.

    The tracked point moves at most hess_inv_norm * beta per unit of
    parameter distance, so half the certified radius is preserved by
    steps up to (rho/2) / (hess_inv_norm * beta), capped at pi/2.
    """
    rho_val = rho.rho if isinstance(rho, CertifiedRadius) else float(rho)
    if hess_inv_norm <= 0.0 or not math.isfinite(hess_inv_norm):
        raise InvalidInputError(f"hess_inv_norm must be positive, got {hess_inv_norm}")
    if rho_val <= 0.0:
        raise InvalidInputError(f"rho must be positive, got {rho_val}")
    if beta < 0.0:
        raise InvalidInputError(f"beta must be nonnegative, got {beta}")
    if beta == 0.0 or math.isinf(rho_val):
        return math.pi / 2.0
    return min(math.pi / 2.0, (rho_val / 2.0) / (hess_inv_norm * beta))


def _spectrum_or_degenerate(
    problem: ProblemDefinition, x: np.ndarray, theta: np.ndarray, where: str
) -> tuple[np.ndarray, float]:
    H = np.asarray(problem.fibre_hess(x, theta), dtype=float)
    _, norm, cond = symmetric_spectrum(H)
    if norm == 0.0 or cond > COND_LIMIT:
        raise DegenerateCriticalPointError(
            f"{problem.name}: Hessian degenerate while tracking ({where}, "
            f"condition number {cond:.3e})"
        )
    return H, cond / norm


def track_point(
    problem: ProblemDefinition,
    start: CriticalPointRecord,
    path: ParameterPath,
    bounds: DerivativeBounds,
    tol: float = 1e-9,
    *,
    use_euler: bool = False,
) -> LiftedPath:
    """Carry one critical point along a parameter path, certifying each step.

    The start record must be critical on the fibre at path.start. Chart
    coordinates continue through 2*pi, so a full generator loop reports the
    monodromy image rather than silently wrapping back.
    """
    if tol <= 0.0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    if path.start.dim != problem.shape.base_dim:
        raise InvalidInputError("path dimension does not match the problem base")
    if start.x.dim != problem.shape.fibre_dim:
        raise InvalidInputError("record dimension does not match the problem fibre")

    theta0 = path.start.array
    delta = np.asarray(path.delta, dtype=float)
    x = start.x.array.copy()
    g0 = np.asarray(problem.fibre_grad(x, theta0), dtype=float)
    if float(np.linalg.norm(g0)) > tol:
        raise InvalidInputError(
            f"start record is not critical at the path start "
            f"(gradient norm {float(np.linalg.norm(g0)):.3e} > {tol:.1e})"
        )

    samples = [PathSample(t=0.0, x=wrap(x), certified=True)]
    if path.length == 0.0:
        return LiftedPath(
            component_id=start.component_id, start=start, samples=tuple(samples)
        )

    alpha, beta = bounds.alpha, bounds.beta
    t = 0.0
    while t < 1.0:
        theta_t = wrap(theta0 + t * delta).array
        H, hinv = _spectrum_or_degenerate(problem, x, theta_t, f"t={t:.6g}")
        if alpha == 0.0:
            rho = math.inf
        else:
            rho = certified_radius_nd(hinv, alpha).rho
        rho_chart = min(rho, math.pi)
        dt = min(1.0 - t, step_size_bound(rho_chart, hinv, beta) / path.length)

        first_attempt = True
        while True:
            t_try = 1.0 if dt >= 1.0 - t else t + dt
            theta_try = wrap(theta0 + t_try * delta).array

            predictor = x.copy()
            if use_euler and problem.mixed_partial is not None:
                M = np.asarray(problem.mixed_partial(x, theta_t), dtype=float)
                dtheta = (t_try - t) * delta
                rhs = M.reshape(problem.shape.fibre_dim, problem.shape.base_dim) @ dtheta
                try:
                    predictor = x - np.linalg.solve(H, rhs)
                except np.linalg.LinAlgError:
                    predictor = x.copy()

            def grad_here(y: np.ndarray, _theta=theta_try) -> np.ndarray:
                return np.asarray(problem.fibre_grad(y, _theta), dtype=float)

            def hess_here(y: np.ndarray, _theta=theta_try) -> np.ndarray:
                return np.asarray(problem.fibre_hess(y, _theta), dtype=float)

            try:
                report = newton_polish_chart(
                    grad_here, hess_here, predictor, tol=tol, max_iter=40
                )
            except DegenerateCriticalPointError:
                report = None

            if report is not None and report.converged:
                x_new = report.final_x
                moved = float(np.linalg.norm(x_new - x))
                if moved <= rho_chart:
                    H_new, _ = _spectrum_or_degenerate(
                        problem, x_new, theta_try, f"t={t_try:.6g}"
                    )
                    index_new = classify_index(H_new)
                    if index_new != start.index:
                        raise InconsistencyError(
                            f"{problem.name}: Morse index changed from {start.index} "
                            f"to {index_new} at t={t_try:.6g}"
                        )
                    break
            first_attempt = False
            dt *= 0.5
            if dt < MIN_STEP_FRACTION:
                raise TrackingFailedError(
                    f"{problem.name}: step size underflow at t={t:.6g} "
                    f"(remaining fraction {1.0 - t:.3e})"
                )

        certified = first_attempt
        if not certified:
            offset = predictor - x_new
            try:
                h_bar = averaged_hessian(hess_here, x_new, offset)
                h_at_pred = hess_here(predictor)
                certified = averaged_hessian_test(h_at_pred, h_bar).passes
            except (DegenerateCriticalPointError, np.linalg.LinAlgError):
                certified = False

        samples.append(PathSample(t=t_try, x=wrap(x_new), certified=certified))
        t = t_try
        x = x_new

    return LiftedPath(
        component_id=start.component_id, start=start, samples=tuple(samples)
    )


def _params_match(a: dict[str, float], b: dict[str, float]) -> bool:
    return set(a) == set(b) and all(a[key] == b[key] for key in a)


def query(
    table: PrecomputedTable,
    problem: ProblemDefinition,
    theta: AngleVec,
    mode: str = "track-all-minima",
    *,
    use_euler: bool = False,
) -> SolveResult:
    """Find all global minimisers of the fibre cost at theta via tracking.

    In "track-all-minima" mode every minimum-component record at the nearest
    anchor is tracked; "region-guided" tracks only the components the region
    map lists for theta's cell. Minimisers within value_tol of the best
    tracked value are all returned, sorted by fibre coordinates.
    """
    if mode not in QUERY_MODES:
        raise InvalidConfigError(f"unknown query mode {mode!r} (expected {QUERY_MODES})")
    if not isinstance(theta, AngleVec):
        theta = wrap(np.asarray(theta, dtype=float))
    if theta.dim != table.shape.base_dim:
        raise InvalidInputError(
            f"theta has dimension {theta.dim}, table base is {table.shape.base_dim}"
        )
    if (
        table.problem_name != problem.name
        or table.shape != problem.shape
        or not _params_match(table.problem_params, dict(problem.params))
    ):
        raise TableMismatchError(
            f"table was built for {table.problem_name!r} "
            f"{table.problem_params}, queried with {problem.name!r} {dict(problem.params)}"
        )

    counter = EvalCounter(problem)
    counted = counter.problem
    a = nearest_anchor(table, theta)
    path = plan_path(table, table.anchors[a], theta)
    if mode == "track-all-minima":
        wanted = set(table.topology.min_component_ids)
    else:
        wanted = set(table.regions.components_for(theta))
    records = [
        r
        for r in table.records
        if r.anchor_index == a and r.component_id in wanted
    ]
    if not records:
        raise InconsistencyError(
            f"no minimum-component records at anchor {a} for components {sorted(wanted)}"
        )

    tracked: list[LiftedPath] = []
    endpoints: list[tuple[AngleVec, float]] = []
    for record in records:
        lifted = track_point(
            counted, record, path, table.bounds, table.build.tol, use_euler=use_euler
        )
        end = lifted.end_x
        value = float(counted.value(end.array, theta.array))
        tracked.append(lifted)
        endpoints.append((end, value))

    best = min(v for _, v in endpoints)
    winners = sorted(
        ((end, v) for end, v in endpoints if v <= best + table.build.value_tol),
        key=lambda ev: ev[0].coords,
    )
    minimizers = tuple(BundlePoint(x=end, theta=theta) for end, _ in winners)
    return SolveResult(
        minimizers=minimizers,
        f_value=best,
        tracked=tuple(tracked),
        evaluations=EvalCounts(
            value=counter.counts["value"],
            grad=counter.counts["grad"],
            hess=counter.counts["hess"],
            mixed=counter.counts["mixed"],
        ),
        all_steps_certified=all(p.all_certified for p in tracked),
    )


def query_stream(
    table: PrecomputedTable,
    problem: ProblemDefinition,
    thetas: Iterable[AngleVec],
    mode: str = "track-all-minima",
) -> list[QueryOutcome]:
    """Run query over many base points, reporting failures per item."""
    outcomes: list[QueryOutcome] = []
    for theta in thetas:
        if not isinstance(theta, AngleVec):
            theta = wrap(np.asarray(theta, dtype=float))
        try:
            result = query(table, problem, theta, mode)
        except TorusOptError as exc:
            outcomes.append(QueryOutcome(theta=theta, result=None, error=exc))
        else:
            outcomes.append(QueryOutcome(theta=theta, result=result, error=None))
    return outcomes
