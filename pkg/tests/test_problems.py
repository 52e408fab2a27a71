"""Exercises the cost-family layer: callbacks, catalog, and derivative bounds.

Covered here: finite-difference agreement of every catalog family's gradient,
Hessian, and mixed partial with its analytic formulas; the all-zero report on
a constant family; 2*pi-periodicity of values in both fibre and base
coordinates; Hessian symmetry; closed-form minimisers of the three solvable
families against a dense scan; the curvature-variation estimate alpha
(bracketed for the translated well, scaling with frequency for the winding
family, zero for a constant, monotone under grid refinement); the mixed-bound
beta; evaluation counting for single and batched calls; and validation of
DerivativeBounds fields and unknown catalog names.
"""

import math

import numpy as np
import pytest

from torusopt import (
    BundleShape,
    DerivativeBounds,
    InvalidConfigError,
    InvalidInputError,
    ProblemDefinition,
    catalog_names,
    estimate_alpha,
    estimate_beta,
    fd_check,
    get_catalog_problem,
    wrap,
)
from torusopt.geometry import TWO_PI
from torusopt.problems import CATALOG, EvalCounter, FD_STEP, estimate_bounds

ALL_FAMILIES = tuple(catalog_names())


def constant_problem() -> ProblemDefinition:
    return ProblemDefinition(
        name="constant",
        shape=BundleShape(fibre_dim=1, base_dim=1),
        value=lambda x, t: 0.0,
        fibre_grad=lambda x, t: np.zeros(1),
        fibre_hess=lambda x, t: np.zeros((1, 1)),
    )


def test_catalog_lists_four_families():
    assert ALL_FAMILIES == ("translation", "winding", "competing-wells", "two-harmonic")
    for name in ALL_FAMILIES:
        p = get_catalog_problem(name)
        assert p.name == name
        assert p.shape == BundleShape(fibre_dim=1, base_dim=1)
        assert p.vectorized


def test_unknown_catalog_name_rejected():
    with pytest.raises(InvalidConfigError):
        get_catalog_problem("no-such-family")


@pytest.mark.parametrize("name", ALL_FAMILIES)
def test_fd_check_gradient_and_hessian(name):
    report = fd_check(get_catalog_problem(name), samples=100, seed=0)
    assert report.samples == 100
    assert report.max_grad_error <= 1e-6
    assert report.max_hess_error <= 1e-4


def test_fd_check_constant_family_is_exact():
    report = fd_check(constant_problem(), samples=50, seed=1)
    assert report.max_grad_error == 0.0
    assert report.max_hess_error == 0.0


@pytest.mark.parametrize("name", ALL_FAMILIES)
def test_mixed_partial_matches_finite_differences(name):
    p = get_catalog_problem(name)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(0.0, TWO_PI, 1)
        th = rng.uniform(0.0, TWO_PI, 1)
        fd = (
            np.asarray(p.fibre_grad(x, th + FD_STEP))
            - np.asarray(p.fibre_grad(x, th - FD_STEP))
        ) / (2.0 * FD_STEP)
        analytic = np.asarray(p.mixed_partial(x, th)).reshape(-1)
        worst = max(worst, float(np.max(np.abs(fd.reshape(-1) - analytic))))
    assert worst <= 1e-4


@pytest.mark.parametrize("name", ALL_FAMILIES)
def test_value_periodicity(name):
    p = get_catalog_problem(name)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.uniform(0.0, TWO_PI, 1)
        th = rng.uniform(0.0, TWO_PI, 1)
        base = float(p.value(x, th))
        assert abs(float(p.value(x + TWO_PI, th)) - base) <= 1e-12
        assert abs(float(p.value(x, th - TWO_PI)) - base) <= 1e-12


@pytest.mark.parametrize("name", ALL_FAMILIES)
def test_hessian_symmetry(name):
    p = get_catalog_problem(name)
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.uniform(0.0, TWO_PI, 1)
        th = rng.uniform(0.0, TWO_PI, 1)
        H = np.atleast_2d(np.asarray(p.fibre_hess(x, th), dtype=float))
        assert np.max(np.abs(H - H.T)) <= 1e-10


@pytest.mark.parametrize(
    "name", ["translation", "winding", "competing-wells"]
)
def test_closed_form_minimizers_match_dense_scan(name):
    entry = CATALOG[name]
    p = entry.factory()
    rng = np.random.default_rng(4)
    grid = np.linspace(0.0, TWO_PI, 8192, endpoint=False)
    for _ in range(25):
        th = float(rng.uniform(0.0, TWO_PI))
        values = np.asarray(p.value(grid[:, None], np.asarray([th])))
        best = float(values.min())
        predicted = entry.minimizers(th)
        for x_star in predicted:
            v = float(p.value(np.asarray([x_star]), np.asarray([th])))
            assert v <= best + 1e-6
        # every grid point close to the scan optimum sits near a predicted root
        near = grid[values <= best + 1e-6]
        for g in near:
            dist = min(
                abs(math.remainder(g - x_star, TWO_PI)) for x_star in predicted
            )
            assert dist <= 0.01


def test_estimate_alpha_translation_bracket():
    alpha = estimate_alpha(get_catalog_problem("translation"))
    assert 0.95 <= alpha <= 1.575


def test_estimate_alpha_winding_scales_with_frequency():
    alpha = estimate_alpha(get_catalog_problem("winding"))
    assert alpha == pytest.approx(12.0, rel=0.05)


def test_estimate_alpha_constant_is_zero():
    assert estimate_alpha(constant_problem(), 16) == 0.0


def test_estimate_alpha_monotone_under_refinement():
    p = get_catalog_problem("translation")
    estimates = [estimate_alpha(p, g) for g in (16, 32, 64, 128)]
    for coarse, fine in zip(estimates, estimates[1:]):
        assert coarse <= fine + 1e-9


def test_estimate_beta_uses_analytic_mixed_partial():
    assert estimate_beta(get_catalog_problem("translation")) == pytest.approx(1.5)
    assert estimate_beta(get_catalog_problem("winding")) == pytest.approx(3.0)
    assert estimate_beta(get_catalog_problem("competing-wells")) == pytest.approx(0.75)


def test_estimate_bounds_reports_source():
    bounds = estimate_bounds(get_catalog_problem("translation"))
    assert bounds.source == "estimated"
    assert bounds.alpha > 0.0 and bounds.beta > 0.0


def test_derivative_bounds_validation():
    with pytest.raises(InvalidInputError):
        DerivativeBounds(alpha=-0.1, beta=1.0)
    with pytest.raises(InvalidInputError):
        DerivativeBounds(alpha=1.0, beta=-1.0)
    with pytest.raises(InvalidInputError):
        DerivativeBounds(alpha=1.0, beta=1.0, source="guessed")
    ok = DerivativeBounds(alpha=0.0, beta=0.0, source="user-supplied")
    assert ok.source == "user-supplied"


def test_eval_counter_counts_scalar_and_batch_calls():
    p = get_catalog_problem("translation")
    counter = EvalCounter(p)
    wrapped = counter.problem
    th = np.asarray([0.5])
    wrapped.value(np.asarray([1.0]), th)
    wrapped.value(np.ones((7, 1)), th)
    wrapped.fibre_grad(np.ones((3, 1)), th)
    wrapped.fibre_hess(np.asarray([1.0]), th)
    assert counter.counts["value"] == 8
    assert counter.counts["grad"] == 3
    assert counter.counts["hess"] == 1


def test_wrapped_problem_matches_original():
    p = get_catalog_problem("winding")
    wrapped = EvalCounter(p).problem
    x, th = np.asarray([1.2]), np.asarray([0.7])
    assert float(wrapped.value(x, th)) == float(p.value(x, th))
    assert np.allclose(wrapped.fibre_hess(x, th), p.fibre_hess(x, th))
