"""Parametric cost families on torus bundles and their derivative bounds.

A problem is a smooth map f: T^k x T^m -> R given by callbacks for the value,
the fibre-wise gradient and Hessian, and (optionally) the mixed partial
d^2 f / dx dtheta. Callbacks take raw coordinate arrays and must accept any
real input (they are evaluated on unwrapped angles during continuation); a
problem flagged ``vectorized`` additionally accepts a leading batch axis.

The module ships a small catalog of closed-form families used throughout the
test suite, finite-difference consistency checks for user-supplied callbacks,
and grid estimators for the two uniform derivative bounds that drive
certified step-size selection:

  alpha  Lipschitz constant of the fibre Hessian w.r.t. fibre coordinates,
  beta   operator-norm bound on the mixed partial d^2 f / dx dtheta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, InvalidProblemError
from .geometry import TWO_PI, AngleVec, BundlePoint, BundleShape

__all__ = [
    "ProblemDefinition",
    "DerivativeBounds",
    "CatalogEntry",
    "FdReport",
    "CATALOG",
    "catalog_names",
    "get_catalog_problem",
    "fd_check",
    "estimate_alpha",
    "estimate_beta",
    "estimate_bounds",
    "operator_norm",
    "EvalCounter",
]

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemDefinition:
    """A parametric cost family f(x; theta) with analytic fibre derivatives.

    Callback shape contract (B an optional batch axis):
        value(x, theta)         (k,)/(B,k) x (m,)/(B,m) -> scalar / (B,)
        fibre_grad(x, theta)    -> (k,) / (B,k)
        fibre_hess(x, theta)    -> (k,k) / (B,k,k)
        mixed_partial(x, theta) -> (k,m) / (B,k,m), may be None
    Batched calls are only made when ``vectorized`` is True.
    """

    name: str
    shape: BundleShape
    value: ArrayFn
    fibre_grad: ArrayFn
    fibre_hess: ArrayFn
    mixed_partial: ArrayFn | None = None
    vectorized: bool = False
    params: dict[str, float] = field(default_factory=dict)

    def value_at(self, p: BundlePoint) -> float:
        """Evaluate f at a bundle point, checking finiteness."""
        v = float(self.value(p.x.array, p.theta.array))
        if not math.isfinite(v):
            raise InvalidProblemError(f"{self.name}: non-finite value at {p}")
        return v

    def grad_at(self, p: BundlePoint) -> np.ndarray:
        return np.asarray(self.fibre_grad(p.x.array, p.theta.array), dtype=float)

    def hess_at(self, p: BundlePoint) -> np.ndarray:
        return np.asarray(self.fibre_hess(p.x.array, p.theta.array), dtype=float)


@dataclass(frozen=True)
class DerivativeBounds:
    """Uniform bounds used for certified radii and step planning.

    alpha bounds the Lipschitz constant of the fibre Hessian in fibre
    coordinates over all of M; beta bounds the operator norm of the mixed
    partial. ``source`` records whether the numbers were estimated by
    sampling or supplied by the caller.
    """

    alpha: float
    beta: float
    source: str = "estimated"

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.beta < 0.0:
            raise InvalidInputError("derivative bounds must be non-negative")
        if self.source not in ("estimated", "user-supplied"):
            raise InvalidInputError(f"unknown bounds source {self.source!r}")


@dataclass(frozen=True)
class FdReport:
    """Worst-case finite-difference consistency errors over sampled points."""

    max_grad_error: float
    max_hess_error: float
    samples: int


# --------------------------------------------------------------------------
# Catalog families (all on T^1 x T^1)
# --------------------------------------------------------------------------


def _family_1d(
    name: str,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    fx: Callable[[np.ndarray, np.ndarray], np.ndarray],
    fxx: Callable[[np.ndarray, np.ndarray], np.ndarray],
    fxt: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> ProblemDefinition:
    """Assemble a k=m=1 problem from scalar formulas of (x0, theta0).

    The wrappers adapt the (..., 1) coordinate layout and broadcast over an
    optional batch axis, so each family below is just four trig formulas.
    """

    def value(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return f(np.asarray(x)[..., 0], np.asarray(theta)[..., 0])

    def grad(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return fx(np.asarray(x)[..., 0], np.asarray(theta)[..., 0])[..., None]

    def hess(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return fxx(np.asarray(x)[..., 0], np.asarray(theta)[..., 0])[..., None, None]

    def mixed(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return fxt(np.asarray(x)[..., 0], np.asarray(theta)[..., 0])[..., None, None]

    return ProblemDefinition(
        name=name,
        shape=BundleShape(fibre_dim=1, base_dim=1),
        value=value,
        fibre_grad=grad,
        fibre_hess=hess,
        mixed_partial=mixed,
        vectorized=True,
    )


def _translation() -> ProblemDefinition:
    # f = -cos(x - theta): a single well translated rigidly by theta.
    return _family_1d(
        "translation",
        lambda x, t: -np.cos(x - t),
        lambda x, t: np.sin(x - t),
        lambda x, t: np.cos(x - t),
        lambda x, t: -np.cos(x - t),
    )


def _winding() -> ProblemDefinition:
    # f = cos(2x - theta): critical curves x = theta/2 + j*pi/2 wind around
    # the base; one loop in theta shifts x by pi.
    return _family_1d(
        "winding",
        lambda x, t: np.cos(2.0 * x - t),
        lambda x, t: -2.0 * np.sin(2.0 * x - t),
        lambda x, t: -4.0 * np.cos(2.0 * x - t),
        lambda x, t: 2.0 * np.cos(2.0 * x - t),
    )


def _competing_wells() -> ProblemDefinition:
    # f = -cos(2x) + c*cos(theta)*cos(x), c = 0.5: two wells at x=0 and x=pi
    # whose depths trade places as cos(theta) changes sign.
    c = 0.5
    p = _family_1d(
        "competing-wells",
        lambda x, t: -np.cos(2.0 * x) + c * np.cos(t) * np.cos(x),
        lambda x, t: 2.0 * np.sin(2.0 * x) - c * np.cos(t) * np.sin(x),
        lambda x, t: 4.0 * np.cos(2.0 * x) - c * np.cos(t) * np.cos(x),
        lambda x, t: c * np.sin(t) * np.sin(x),
    )
    return replace(p, params={"coupling": c})


def _two_harmonic() -> ProblemDefinition:
    # f = -cos(x - theta) + a*cos(2x), a = 0.2: a translated well riding on a
    # fixed second harmonic; the well flattens without splitting.
    a = 0.2
    p = _family_1d(
        "two-harmonic",
        lambda x, t: -np.cos(x - t) + a * np.cos(2.0 * x),
        lambda x, t: np.sin(x - t) - 2.0 * a * np.sin(2.0 * x),
        lambda x, t: np.cos(x - t) - 4.0 * a * np.cos(2.0 * x),
        lambda x, t: -np.cos(x - t),
    )
    return replace(p, params={"second_harmonic": a})


@dataclass(frozen=True)
class CatalogEntry:
    """A named test family plus the closed-form facts the tests lean on."""

    name: str
    factory: Callable[[], ProblemDefinition]
    notes: str
    # Closed-form minimiser set x*(theta) for k=1 families, None when the
    # minimisers are only available through the oracle.
    minimizers: Callable[[float], tuple[float, ...]] | None = None
    # Expected fibre-wise critical-point count, component count and
    # per-component fibre intersection numbers, when known in closed form.
    expected_count: int | None = None
    expected_components: int | None = None
    expected_b: tuple[int, ...] | None = None


def _translation_minimizers(theta: float) -> tuple[float, ...]:
    return (theta % TWO_PI,)


def _winding_minimizers(theta: float) -> tuple[float, ...]:
    base = 0.5 * theta
    return tuple(sorted(((base + 0.5 * math.pi) % TWO_PI, (base + 1.5 * math.pi) % TWO_PI)))


def _competing_minimizers(theta: float) -> tuple[float, ...]:
    # f(0) - f(pi) = cos(theta): the deeper well is x=pi when cos(theta) > 0,
    # x=0 when cos(theta) < 0, and both tie at cos(theta) = 0.
    c = math.cos(theta)
    if abs(c) < 1e-12:
        return (0.0, math.pi)
    return (math.pi,) if c > 0 else (0.0,)


CATALOG: dict[str, CatalogEntry] = {
    "translation": CatalogEntry(
        name="translation",
        factory=_translation,
        notes="single well rigidly translated; minimiser x* = theta",
        minimizers=_translation_minimizers,
        expected_count=2,
        expected_components=2,
        expected_b=(1, 1),
    ),
    "winding": CatalogEntry(
        name="winding",
        factory=_winding,
        notes="critical curves wind around the base; two tied minima per fibre",
        minimizers=_winding_minimizers,
        expected_count=4,
        expected_components=2,
        expected_b=(2, 2),
    ),
    "competing-wells": CatalogEntry(
        name="competing-wells",
        factory=_competing_wells,
        notes="wells at x=0 and x=pi swap global optimality at cos(theta)=0",
        minimizers=_competing_minimizers,
        expected_count=4,
        expected_components=4,
        expected_b=(1, 1, 1, 1),
    ),
    "two-harmonic": CatalogEntry(
        name="two-harmonic",
        factory=_two_harmonic,
        notes="translated well plus fixed second harmonic; oracle-determined structure",
        minimizers=None,
        expected_count=None,
        expected_components=None,
        expected_b=None,
    ),
}


def catalog_names() -> list[str]:
    return list(CATALOG.keys())


def get_catalog_problem(name: str) -> ProblemDefinition:
    try:
        entry = CATALOG[name]
    except KeyError:
        raise InvalidConfigError(
            f"unknown problem {name!r}; available: {', '.join(catalog_names())}"
        ) from None
    return entry.factory()


# --------------------------------------------------------------------------
# Evaluation counting
# --------------------------------------------------------------------------


class EvalCounter:
    """Wraps a problem so every callback invocation is counted.

    Batched calls count once per row. The wrapped problem is exposed as
    :attr:`problem` and shares the original's contract, so it can be passed
    anywhere a ProblemDefinition is expected.
    """

    def __init__(self, problem: ProblemDefinition) -> None:
        self.counts = {"value": 0, "grad": 0, "hess": 0, "mixed": 0}
        self._base = problem

        def _count(key: str, fn: ArrayFn) -> ArrayFn:
            def wrapped(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
                n = int(np.asarray(x).shape[0]) if np.asarray(x).ndim == 2 else 1
                self.counts[key] += n
                return fn(x, theta)

            return wrapped

        self.problem = replace(
            problem,
            value=_count("value", problem.value),
            fibre_grad=_count("grad", problem.fibre_grad),
            fibre_hess=_count("hess", problem.fibre_hess),
            mixed_partial=(
                _count("mixed", problem.mixed_partial)
                if problem.mixed_partial is not None
                else None
            ),
        )


# --------------------------------------------------------------------------
# Finite-difference consistency and bound estimation
# --------------------------------------------------------------------------

FD_STEP = 1e-5


def _random_points(
    shape: BundleShape, samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, TWO_PI, size=(samples, shape.fibre_dim))
    thetas = rng.uniform(0.0, TWO_PI, size=(samples, shape.base_dim))
    return xs, thetas


def fd_check(problem: ProblemDefinition, samples: int = 100, seed: int = 0) -> FdReport:
    """Compare analytic fibre derivatives against central differences.

    Uses step 1e-5; reports the worst absolute errors over ``samples``
    uniformly drawn bundle points. Gradients are checked against differenced
    values, Hessian columns against differenced gradients.
    """
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    k = problem.shape.fibre_dim
    xs, thetas = _random_points(problem.shape, samples, seed)
    h = FD_STEP
    max_grad = 0.0
    max_hess = 0.0
    for x, theta in zip(xs, thetas):
        g = np.asarray(problem.fibre_grad(x, theta), dtype=float)
        H = np.asarray(problem.fibre_hess(x, theta), dtype=float)
        for i in range(k):
            e = np.zeros(k)
            e[i] = h
            g_fd = (float(problem.value(x + e, theta)) - float(problem.value(x - e, theta))) / (
                2.0 * h
            )
            max_grad = max(max_grad, abs(g_fd - g[i]))
            col_fd = (
                np.asarray(problem.fibre_grad(x + e, theta), dtype=float)
                - np.asarray(problem.fibre_grad(x - e, theta), dtype=float)
            ) / (2.0 * h)
            max_hess = max(max_hess, float(np.max(np.abs(col_fd - H[:, i]))))
    return FdReport(max_grad_error=max_grad, max_hess_error=max_hess, samples=samples)


def operator_norm(matrix: np.ndarray) -> float:
    """Largest singular value; for the symmetric matrices here, max |eigenvalue|."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    return float(np.linalg.norm(m, 2))


SAFETY_FACTOR = 1.5


def _sample_grid(shape: BundleShape, per_dim: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Product lattice over M, capped so the total point count stays bounded.

    Returns fibre coordinates, base coordinates, and the realised spacing.
    """
    dims = shape.fibre_dim + shape.base_dim
    budget = 2**16
    eff = min(per_dim, max(8, int(round(budget ** (1.0 / dims)))))
    axes = [np.linspace(0.0, TWO_PI, eff, endpoint=False) for _ in range(dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return pts[:, : shape.fibre_dim], pts[:, shape.fibre_dim :], TWO_PI / eff


def _hessians_on(problem: ProblemDefinition, xs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    k = problem.shape.fibre_dim
    if problem.vectorized:
        return np.asarray(problem.fibre_hess(xs, thetas), dtype=float).reshape(-1, k, k)
    out = np.empty((xs.shape[0], k, k))
    for i in range(xs.shape[0]):
        out[i] = np.asarray(problem.fibre_hess(xs[i], thetas[i]), dtype=float)
    return out


def estimate_alpha(problem: ProblemDefinition, grid_per_dim: int = 64) -> float:
    """Estimate the fibre-Hessian Lipschitz constant by grid differencing.

    Takes the max over lattice point pairs along each fibre coordinate
    direction of ||H(x+h e_i) - H(x)|| / h, then multiplies by the safety
    factor 1.5. The pre-safety estimate is monotone non-decreasing under
    grid refinement for band-limited (trigonometric polynomial) families.
    """
    xs, thetas, h = _sample_grid(problem.shape, grid_per_dim)
    k = problem.shape.fibre_dim
    H = _hessians_on(problem, xs, thetas)
    best = 0.0
    for i in range(k):
        step = np.zeros(k)
        step[i] = h
        H_shift = _hessians_on(problem, xs + step, thetas)
        norms = np.linalg.norm(H_shift - H, ord=2, axis=(1, 2))
        best = max(best, float(np.max(norms)) / h)
    return SAFETY_FACTOR * best


def estimate_beta(problem: ProblemDefinition, grid_per_dim: int = 64) -> float:
    """Estimate the uniform mixed-partial bound ||d^2 f / dx dtheta||.

    Uses the analytic mixed partial when the problem provides one, otherwise
    central differences of the fibre gradient in theta with step 1e-5; either
    way the sampled max gets the same 1.5 safety factor as alpha.
    """
    xs, thetas, _ = _sample_grid(problem.shape, grid_per_dim)
    k, m = problem.shape.fibre_dim, problem.shape.base_dim
    n = xs.shape[0]
    if problem.mixed_partial is not None:
        if problem.vectorized:
            M = np.asarray(problem.mixed_partial(xs, thetas), dtype=float).reshape(n, k, m)
        else:
            M = np.empty((n, k, m))
            for i in range(n):
                M[i] = np.asarray(problem.mixed_partial(xs[i], thetas[i]), dtype=float)
    else:
        M = np.empty((n, k, m))
        h = FD_STEP
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            if problem.vectorized:
                gp = np.asarray(problem.fibre_grad(xs, thetas + e), dtype=float).reshape(n, k)
                gm = np.asarray(problem.fibre_grad(xs, thetas - e), dtype=float).reshape(n, k)
                M[:, :, j] = (gp - gm) / (2.0 * h)
            else:
                for i in range(n):
                    gp = np.asarray(problem.fibre_grad(xs[i], thetas[i] + e), dtype=float)
                    gm = np.asarray(problem.fibre_grad(xs[i], thetas[i] - e), dtype=float)
                    M[i, :, j] = (gp - gm) / (2.0 * h)
    norms = np.linalg.norm(M, ord=2, axis=(1, 2))
    return SAFETY_FACTOR * float(np.max(norms))


def estimate_bounds(problem: ProblemDefinition, grid_per_dim: int = 64) -> DerivativeBounds:
    """Convenience wrapper bundling both grid estimates."""
    return DerivativeBounds(
        alpha=estimate_alpha(problem, grid_per_dim),
        beta=estimate_beta(problem, grid_per_dim),
        source="estimated",
    )
