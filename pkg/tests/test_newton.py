"""Exercises the certified Newton kernel on worked 1-D cases and catalogs.

Covered here: the plain Newton step on the reference cubic h = x^2 + x^3;
polish runs that converge in a handful of steps, recognise an exact critical
point immediately, and walk across chart seams; both certified-radius
formulas with their edge cases (zero curvature variation, degenerate or
invalid inputs) and mutual consistency; the averaged-Hessian certificate on
matrices where it passes and where it must fail, plus the Gauss quadrature
behind it; the scalar derivative ratio test including its floating-point
behaviour at the analytic threshold (3 - sqrt(6))/9; the Hessian
perturbation bound with its blow-up near the applicability edge; the
per-iteration halving contract on seeded starts inside the certified
interval; and the guarantee that a passing certificate forces the next
Newton step to at least halve the distance to the critical point.
"""

import math

import numpy as np
import pytest

from torusopt import (
    BoundInapplicableError,
    BundlePoint,
    BundleShape,
    DegenerateCriticalPointError,
    InvalidInputError,
    ProblemDefinition,
    averaged_hessian_test,
    certified_radius_1d,
    certified_radius_nd,
    hessian_perturbation_bound,
    newton_derivative_test_1d,
    newton_polish,
    newton_step,
    wrap,
)
from torusopt.newton import (
    NEWTON_DERIVATIVE_LIMIT,
    averaged_hessian,
    newton_polish_chart,
)

THRESHOLD = (3.0 - math.sqrt(6.0)) / 9.0


def cubic_h1(x: float) -> float:
    return 2.0 * x + 3.0 * x * x


def cubic_h2(x: float) -> float:
    return 2.0 + 6.0 * x


def cubic_problem() -> ProblemDefinition:
    return ProblemDefinition(
        name="cubic-well",
        shape=BundleShape(1, 1),
        value=lambda x, th: x[..., 0] ** 2 + x[..., 0] ** 3,
        fibre_grad=lambda x, th: (2.0 * x[..., 0] + 3.0 * x[..., 0] ** 2)[..., None],
        fibre_hess=lambda x, th: (2.0 + 6.0 * x[..., 0])[..., None, None],
    )


def test_newton_step_on_cubic():
    point = BundlePoint(wrap([0.1]), wrap([0.0]))
    stepped = newton_step(cubic_problem(), point)
    assert stepped.x.coords[0] == 0.011538461538461539
    assert stepped.theta == point.theta


def test_newton_polish_translation_well():
    from torusopt import get_catalog_problem

    p = get_catalog_problem("translation")
    report = newton_polish(p, BundlePoint(wrap([1.3]), wrap([1.0])), tol=1e-10)
    assert report.converged
    assert report.steps <= 6
    assert float(report.final_x[0]) == pytest.approx(1.0, abs=1e-12)


def test_newton_polish_exact_start_takes_no_steps():
    from torusopt import get_catalog_problem

    p = get_catalog_problem("translation")
    report = newton_polish(p, BundlePoint(wrap([1.0]), wrap([1.0])), tol=1e-10)
    assert report.converged
    assert report.steps == 0


def test_newton_polish_competing_wells_near_pi():
    from torusopt import get_catalog_problem

    p = get_catalog_problem("competing-wells")
    report = newton_polish(
        p, BundlePoint(wrap([math.pi + 0.2]), wrap([0.3])), tol=1e-10
    )
    assert report.converged
    assert wrap(report.final_x).coords[0] == pytest.approx(math.pi, abs=1e-12)


def test_certified_radius_1d_values():
    assert certified_radius_1d(2.0, 6.0).rho == 1.0 / 6.0
    assert math.isinf(certified_radius_1d(2.0, 0.0).rho)
    assert certified_radius_1d(4.0, 1.0).rho == 2.0


def test_certified_radius_1d_rejects_degenerate_curvature():
    with pytest.raises(DegenerateCriticalPointError):
        certified_radius_1d(0.0, 1.0)
    with pytest.raises(DegenerateCriticalPointError):
        certified_radius_1d(-2.0, 1.0)


def test_certified_radius_nd_values():
    assert certified_radius_nd(0.5, 6.0).rho == 1.0 / 6.0
    assert certified_radius_nd(1.0, 1.0).rho == 0.5
    assert math.isinf(certified_radius_nd(1.0, 0.0).rho)


def test_certified_radius_nd_rejects_bad_inverse_norm():
    with pytest.raises(InvalidInputError):
        certified_radius_nd(0.0, 1.0)
    with pytest.raises(InvalidInputError):
        certified_radius_nd(-1.0, 1.0)


def test_radius_formulas_agree_in_one_dimension():
    rng = np.random.default_rng(8)
    for _ in range(100):
        h2 = float(rng.uniform(0.1, 10.0))
        alpha = float(rng.uniform(0.1, 20.0))
        one_d = certified_radius_1d(h2, alpha).rho
        n_d = certified_radius_nd(1.0 / h2, alpha).rho
        assert one_d == pytest.approx(n_d, rel=1e-12)


def test_averaged_hessian_certificate_passes_and_fails():
    passing = averaged_hessian_test(np.array([[3.0]]), np.array([[2.5]]))
    assert passing.passes
    assert passing.norm_value == pytest.approx(1.0 / 6.0, rel=1e-12)
    failing = averaged_hessian_test(np.array([[0.8]]), np.array([[1.4]]))
    assert not failing.passes
    assert failing.norm_value == pytest.approx(0.75, rel=1e-12)


def test_averaged_hessian_quadrature_is_exact_on_affine_integrand():
    h_bar = averaged_hessian(
        lambda y: np.array([[cubic_h2(y[0])]]), np.zeros(1), np.array([1.0 / 6.0])
    )
    assert float(h_bar[0, 0]) == pytest.approx(2.5, rel=1e-12)


def test_certificate_forces_half_step_on_cubic():
    # Wherever the averaged-Hessian test passes, the Newton step from that
    # point must land within half the distance to the critical point at 0.
    for x in np.linspace(-0.32, 0.9, 300):
        if abs(x) < 1e-12 or cubic_h2(x) <= 0.0:
            continue
        h_bar = averaged_hessian(
            lambda y: np.array([[cubic_h2(y[0])]]), np.zeros(1), np.array([x])
        )
        result = averaged_hessian_test(np.array([[cubic_h2(x)]]), h_bar)
        if result.passes:
            stepped = x - cubic_h1(x) / cubic_h2(x)
            assert abs(stepped) <= 0.5 * abs(x) + 1e-15


def test_derivative_ratio_example():
    result = newton_derivative_test_1d(0.23, 2.6, 6.0)
    assert result.passes
    assert result.value == pytest.approx(0.23 * 6.0 / 2.6**2, rel=1e-15)
    assert result.value == pytest.approx(0.2041, abs=1e-4)


def test_derivative_ratio_threshold_behaviour():
    # The analytic boundary point sits at value 1/4; floating point may land
    # a hair on either side, so the strict inequalities are checked just
    # inside and just outside instead.
    assert NEWTON_DERIVATIVE_LIMIT == 0.25
    x_edge = -THRESHOLD
    edge = newton_derivative_test_1d(cubic_h1(x_edge), cubic_h2(x_edge), 6.0)
    assert edge.value == pytest.approx(0.25, abs=1e-14)
    inside = -THRESHOLD * (1.0 - 1e-9)
    assert newton_derivative_test_1d(cubic_h1(inside), cubic_h2(inside), 6.0).passes
    outside = -THRESHOLD * (1.0 + 1e-6)
    assert not newton_derivative_test_1d(
        cubic_h1(outside), cubic_h2(outside), 6.0
    ).passes


def test_derivative_ratio_rejects_zero_curvature():
    with pytest.raises(DegenerateCriticalPointError):
        newton_derivative_test_1d(1.0, 0.0, 6.0)


def test_perturbation_bound_values():
    assert hessian_perturbation_bound(0.5, 1.0, 0.4) == pytest.approx(0.4, rel=1e-15)
    assert hessian_perturbation_bound(1.0, 0.9999, 0.1) == pytest.approx(
        1000.0, rel=1e-10
    )


def test_perturbation_bound_inapplicable_at_edge():
    with pytest.raises(BoundInapplicableError):
        hessian_perturbation_bound(1.0, 1.0, 0.1)
    with pytest.raises(BoundInapplicableError):
        hessian_perturbation_bound(0.5, 2.5, 0.1)


def test_halving_contract_inside_certified_interval():
    # rho for the cubic at the origin: |h''(0)| / (2 * alpha) = 2/12 = 1/6.
    rng = np.random.default_rng(0)
    starts = rng.uniform(-1.0 / 6.0, 1.0 / 6.0, size=2000)
    for x0 in starts:
        report = newton_polish_chart(
            lambda y: np.array([cubic_h1(y[0])]),
            lambda y: np.array([[cubic_h2(y[0])]]),
            np.array([x0]),
            tol=1e-13,
            max_iter=60,
        )
        assert report.converged
        xs = [it[0] for it in report.iterates]
        for a, b in zip(xs, xs[1:]):
            assert abs(b) <= 0.5 * abs(a) + 1e-16


def test_polish_certified_ball_on_catalog_minima():
    from torusopt import estimate_alpha, get_catalog_problem

    rng = np.random.default_rng(12)
    for name in ("translation", "winding", "competing-wells"):
        p = get_catalog_problem(name)
        alpha = estimate_alpha(p)
        from torusopt.problems import CATALOG

        for _ in range(25):
            theta = float(rng.uniform(0.0, 2.0 * math.pi))
            for x_star in CATALOG[name].minimizers(theta):
                h2 = abs(float(np.atleast_2d(
                    p.fibre_hess(np.array([x_star]), np.array([theta]))
                )[0, 0]))
                rho = min(certified_radius_1d(h2, alpha).rho, math.pi)
                delta = float(rng.uniform(-0.9 * rho, 0.9 * rho))
                start = wrap([x_star + delta])
                report = newton_polish(p, BundlePoint(start, wrap([theta])), tol=1e-11)
                assert report.converged
                # The polish stays in the chart of the (wrapped) start, so the
                # critical point it reaches is start - delta in that chart.
                expected = start.coords[0] - delta
                assert abs(float(report.final_x[0]) - expected) <= 1e-8
