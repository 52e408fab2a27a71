"""Newton iteration on fibres with computable convergence certificates.

The kernel answers two questions about a point x in a flat chart centred at
an (unknown) critical point of a fibre cost h:

  1. Is x close enough that Newton iterates contract toward the critical
     point, at least halving the distance at every step? A point with that
     property is called an approximate critical point.
  2. How large a ball around the critical point consists entirely of
     approximate critical points?

Question 2 is answered by certified radii computed from a Hessian magnitude
and a uniform bound alpha on the Hessian's Lipschitz constant:

  1-D:  rho = |h''(0)| / (2 * alpha)
  n-D:  rho = 1 / (2 * alpha * ||H_0^{-1}||)

Question 1 is answered pointwise by the averaged-Hessian certificate. With
H_bar(x) = integral_0^1 H(t x) dt one has grad h(x) = H_bar(x) x, so the
Newton step is x -> x - H(x)^{-1} H_bar(x) x and

  ||H(x)^{-1} H_bar(x) - I|| <= 1/2

guarantees the step lands within half the distance to the critical point.
A perturbation bound turns Hessian drift into a bound on that quantity
without evaluating the integral.

A second, 1-D-only diagnostic examines the Newton map's derivative
h' h''' / h''^2. Its pass threshold is 1/4 rather than 1/2: the factor-2
margin makes a pointwise pass at both ends of a symmetric interval certify
the halving contract on the whole interval for the reference cubic
h = x^2 + x^3, whose certified boundary is then |x| = (3 - sqrt(6))/9.

All operator norms are largest singular values; condition numbers above
COND_LIMIT are treated as singular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundInapplicableError,
    DegenerateCriticalPointError,
    InvalidInputError,
    InvalidProblemError,
)
from .geometry import BundlePoint, wrap
from .problems import ProblemDefinition

__all__ = [
    "COND_LIMIT",
    "CertifiedRadius",
    "CertificateResult",
    "NewtonReport",
    "certified_radius_1d",
    "certified_radius_nd",
    "averaged_hessian_test",
    "hessian_perturbation_bound",
    "newton_derivative_test_1d",
    "NEWTON_DERIVATIVE_LIMIT",
    "newton_step",
    "newton_polish",
    "newton_polish_chart",
    "symmetric_spectrum",
    "averaged_hessian",
]

COND_LIMIT = 1e12

# Pass threshold for the Newton-map derivative diagnostic; see module
# docstring for why this is 1/4 and not the contraction constant 1/2.
NEWTON_DERIVATIVE_LIMIT = 0.25


@dataclass(frozen=True)
class CertifiedRadius:
    """A ball radius within which Newton iterates provably at least halve.

    rho may be math.inf (quadratic fibre costs have alpha = 0); consumers
    planning steps must clamp to the chart radius pi before use.
    """

    rho: float
    method: str

    def __post_init__(self) -> None:
        if not (self.rho > 0.0):
            raise InvalidInputError(f"certified radius must be positive, got {self.rho}")


@dataclass(frozen=True)
class CertificateResult:
    """Outcome of a pointwise certificate check."""

    passes: bool
    value: float

    @property
    def norm_value(self) -> float:
        """Alias for tests phrased in terms of an operator-norm value."""
        return self.value


@dataclass(frozen=True)
class NewtonReport:
    """Trace of one Newton polish run in chart coordinates.

    iterates holds the start point and every subsequent iterate, unwrapped
    in the chart of the start (no 2*pi jumps between consecutive entries).
    """

    iterates: tuple[tuple[float, ...], ...]
    converged: bool
    final_grad_norm: float

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def final_x(self) -> np.ndarray:
        """Last iterate, still in unwrapped chart coordinates."""
        return np.asarray(self.iterates[-1], dtype=float)


def certified_radius_1d(h2_mag: float, alpha: float) -> CertifiedRadius:
    """Certified radius around a 1-D critical point with |h''(0)| = h2_mag.

    rho = h2_mag / (2 * alpha); alpha = 0 yields an infinite radius.
    """
    if h2_mag <= 0.0:
        raise DegenerateCriticalPointError(f"h2_mag must be positive, got {h2_mag}")
    if alpha < 0.0:
        raise InvalidInputError(f"alpha must be non-negative, got {alpha}")
    rho = math.inf if alpha == 0.0 else h2_mag / (2.0 * alpha)
    return CertifiedRadius(rho=rho, method="third-derivative-1d")


def certified_radius_nd(h0_inv_norm: float, alpha: float) -> CertifiedRadius:
    """Certified radius around an n-D critical point with ||H_0^{-1}|| given.

    rho = 1 / (2 * alpha * ||H_0^{-1}||); alpha = 0 yields an infinite
    radius. Reduces to the 1-D formula since ||H_0^{-1}|| = 1/|h''(0)|.
    """
    if h0_inv_norm <= 0.0:
        raise InvalidInputError(f"h0_inv_norm must be positive, got {h0_inv_norm}")
    if alpha < 0.0:
        raise InvalidInputError(f"alpha must be non-negative, got {alpha}")
    rho = math.inf if alpha == 0.0 else 1.0 / (2.0 * alpha * h0_inv_norm)
    return CertifiedRadius(rho=rho, method="hessian-lipschitz-nd")


def symmetric_spectrum(hessian: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Eigenvalues of a symmetric matrix plus operator norm and condition number.

    Returns (eigenvalues, ||H||, cond); cond is math.inf for a singular H.
    """
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    if H.shape[0] != H.shape[1]:
        raise InvalidInputError(f"Hessian must be square, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InvalidProblemError("Hessian has non-finite entries")
    eigs = np.linalg.eigvalsh(0.5 * (H + H.T))
    mags = np.abs(eigs)
    norm = float(np.max(mags))
    smallest = float(np.min(mags))
    cond = math.inf if smallest == 0.0 else norm / smallest
    return eigs, norm, cond


def _inverse_norm(hessian: np.ndarray, context: str) -> float:
    """||H^{-1}|| for a symmetric H, raising on near-singularity."""
    _, norm, cond = symmetric_spectrum(hessian)
    if norm == 0.0 or cond > COND_LIMIT:
        raise DegenerateCriticalPointError(
            f"{context}: Hessian condition number {cond:.3e} exceeds {COND_LIMIT:.0e}"
        )
    return cond / norm


def averaged_hessian_test(hess_at_x: np.ndarray, hess_bar: np.ndarray) -> CertificateResult:
    """Pointwise approximate-critical-point certificate.

    value = ||H(x)^{-1} H_bar(x) - I||; passes iff value <= 1/2, in which
    case the Newton step from x lands within half of ||x|| of the chart
    origin. Raises if H(x) is singular to working precision.
    """
    Hx = np.atleast_2d(np.asarray(hess_at_x, dtype=float))
    Hb = np.atleast_2d(np.asarray(hess_bar, dtype=float))
    if Hx.shape != Hb.shape:
        raise InvalidInputError(f"shape mismatch: {Hx.shape} vs {Hb.shape}")
    _inverse_norm(Hx, "averaged_hessian_test")
    residual = np.linalg.solve(Hx, Hb) - np.eye(Hx.shape[0])
    value = float(np.linalg.norm(residual, 2))
    return CertificateResult(passes=value <= 0.5, value=value)


def hessian_perturbation_bound(
    h0_inv_norm: float, hess_drift_norm: float, hbar_drift_norm: float
) -> float:
    """Bound ||H(x)^{-1} H_bar(x) - I|| from Hessian drift alone.

    With d = ||H(x) - H_0|| and b = ||H_bar(x) - H(x)||,

        ||H(x)^{-1} H_bar(x) - I|| <= b / (1/||H_0^{-1}|| - d),

    valid while d < 1/||H_0^{-1}|| (otherwise the Neumann-series argument
    behind the bound collapses and BoundInapplicableError is raised).
    """
    if h0_inv_norm <= 0.0:
        raise InvalidInputError(f"h0_inv_norm must be positive, got {h0_inv_norm}")
    if hess_drift_norm < 0.0 or hbar_drift_norm < 0.0:
        raise InvalidInputError("drift norms must be non-negative")
    denom = 1.0 / h0_inv_norm - hess_drift_norm
    if denom <= 0.0:
        raise BoundInapplicableError(
            f"Hessian drift {hess_drift_norm:.6g} reaches 1/||H0^-1|| = {1.0 / h0_inv_norm:.6g}"
        )
    return hbar_drift_norm / denom


def newton_derivative_test_1d(h1: float, h2: float, h3: float) -> CertificateResult:
    """1-D diagnostic on the Newton map's derivative h' h''' / h''^2.

    value = |h1 * h3 / h2^2|; passes iff value <= 1/4. The halved threshold
    (1/4, not the contraction constant 1/2) certifies the halving contract
    on the whole symmetric interval when both endpoints pass; for the cubic
    x^2 + x^3 the resulting boundary is |x| = (3 - sqrt(6))/9 ~= 0.0612.
    """
    for name, v in (("h1", h1), ("h2", h2), ("h3", h3)):
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v}")
    if h2 == 0.0:
        raise DegenerateCriticalPointError("newton_derivative_test_1d: h'' is zero")
    value = abs(h1 * h3 / (h2 * h2))
    return CertificateResult(passes=value <= NEWTON_DERIVATIVE_LIMIT, value=value)


# --------------------------------------------------------------------------
# Newton iteration
# --------------------------------------------------------------------------


def _solve_step(H: np.ndarray, g: np.ndarray, context: str) -> np.ndarray:
    _, norm, cond = symmetric_spectrum(H)
    if norm == 0.0 or cond > COND_LIMIT:
        raise DegenerateCriticalPointError(
            f"{context}: singular Hessian (condition number {cond:.3e})"
        )
    return np.linalg.solve(H, g)


def averaged_hessian(
    hess,
    origin: np.ndarray,
    offset: np.ndarray,
    nodes: int = 8,
) -> np.ndarray:
    """Gauss-Legendre approximation of integral_0^1 H(origin + t*offset) dt."""
    origin = np.asarray(origin, dtype=float)
    offset = np.asarray(offset, dtype=float)
    t, w = np.polynomial.legendre.leggauss(nodes)
    # Map nodes from [-1, 1] to [0, 1].
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    acc = None
    for ti, wi in zip(t, w):
        Hi = np.atleast_2d(np.asarray(hess(origin + ti * offset), dtype=float))
        acc = wi * Hi if acc is None else acc + wi * Hi
    return acc


def newton_step(problem: ProblemDefinition, point: BundlePoint) -> BundlePoint:
    """One Newton step on the fibre through point.theta, wrapped to the torus."""
    x = point.x.array
    theta = point.theta.array
    g = np.asarray(problem.fibre_grad(x, theta), dtype=float)
    H = np.asarray(problem.fibre_hess(x, theta), dtype=float)
    if not np.all(np.isfinite(g)):
        raise InvalidProblemError(f"{problem.name}: non-finite gradient at {point}")
    step = _solve_step(np.atleast_2d(H), np.atleast_1d(g), "newton_step")
    return BundlePoint(x=wrap(x - step), theta=point.theta)


def newton_polish_chart(
    grad,
    hess,
    x0: np.ndarray,
    tol: float,
    max_iter: int,
) -> NewtonReport:
    """Newton iteration in a flat chart until the gradient norm is <= tol.

    grad/hess are callables of the chart coordinate only. Convergence is
    checked before the first step, so a start at a critical point reports
    zero iterations. Raises DegenerateCriticalPointError on a singular
    Hessian mid-run and InvalidProblemError on non-finite callbacks.
    """
    if tol <= 0.0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    if max_iter < 0:
        raise InvalidInputError(f"max_iter must be >= 0, got {max_iter}")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    iterates = [tuple(float(v) for v in x)]
    g = np.atleast_1d(np.asarray(grad(x), dtype=float))
    if not np.all(np.isfinite(g)):
        raise InvalidProblemError("non-finite gradient in Newton polish")
    gnorm = float(np.linalg.norm(g))
    for _ in range(max_iter):
        if gnorm <= tol:
            break
        H = np.atleast_2d(np.asarray(hess(x), dtype=float))
        x = x - _solve_step(H, g, "newton_polish")
        iterates.append(tuple(float(v) for v in x))
        g = np.atleast_1d(np.asarray(grad(x), dtype=float))
        if not np.all(np.isfinite(g)):
            raise InvalidProblemError("non-finite gradient in Newton polish")
        gnorm = float(np.linalg.norm(g))
    return NewtonReport(
        iterates=tuple(iterates),
        converged=gnorm <= tol,
        final_grad_norm=gnorm,
    )


def newton_polish(
    problem: ProblemDefinition,
    point: BundlePoint,
    tol: float = 1e-9,
    max_iter: int = 40,
) -> NewtonReport:
    """Polish a bundle point to a fibre-wise critical point at fixed theta.

    Iterates in the flat chart of the start (accumulating unwrapped steps);
    wrap(report.final_x) recovers the polished torus point.
    """
    theta = point.theta.array

    def grad(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_grad(x, theta), dtype=float)

    def hess(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_hess(x, theta), dtype=float)

    return newton_polish_chart(grad, hess, point.x.array, tol=tol, max_iter=max_iter)
