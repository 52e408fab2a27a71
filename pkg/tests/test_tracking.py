"""Exercises the online tracker: planning, stepping, and whole queries.

Covered here: nearest-anchor selection with its smallest-index tie rule and
dimension guard; geodesic path planning from anchors; the a-priori step
bound with its pi/2 cap and its infinite-radius and zero-coupling special
cases; single-point tracking along real paths (endpoint accuracy, per-sample
criticality, certified flags, zero-length paths, non-critical starts);
monodromy along generator loops for the family whose critical curves wind;
forced failure modes (step underflow, Morse index change across a stepped-
over degeneracy); full queries against closed-form minimisers including
tied wells, region-guided versus track-all consistency, the Euler predictor
option, evaluation budgets, mismatched tables, and streamed per-item error
reporting.
"""

import dataclasses
import math

import numpy as np
import pytest

from torusopt import (
    BundleShape,
    CriticalPointRecord,
    InconsistencyError,
    InvalidConfigError,
    InvalidInputError,
    ParameterPath,
    ProblemDefinition,
    TableMismatchError,
    TrackingFailedError,
    certified_radius_1d,
    geodesic_distance,
    get_catalog_problem,
    nearest_anchor,
    plan_path,
    query,
    query_stream,
    select_anchors,
    step_size_bound,
    track_point,
    wrap,
)
from torusopt.problems import DerivativeBounds, catalog_names
from torusopt.tracking import nearest_anchor_index

TWO_PI = 2.0 * math.pi


def test_nearest_anchor_index_basic_and_wraparound():
    anchors = select_anchors(BundleShape(1, 1), 8)
    assert nearest_anchor_index(anchors, wrap([0.1])) == 0
    assert nearest_anchor_index(anchors, wrap([3.2])) == 4
    # 6.0 is closer to 0 across the seam than to the last anchor.
    assert nearest_anchor_index(anchors, wrap([6.0])) == 0


def test_nearest_anchor_index_tie_picks_smallest():
    anchors = select_anchors(BundleShape(1, 1), 8)
    assert nearest_anchor_index(anchors, wrap([math.pi / 8.0])) == 0


def test_nearest_anchor_checks_dimension(default_tables):
    table = default_tables["translation"]
    with pytest.raises(InvalidInputError):
        nearest_anchor(table, wrap([0.5, 0.5]))


def test_plan_path_takes_shortest_deltas(default_tables):
    table = default_tables["translation"]
    path = plan_path(table, wrap([6.0]), wrap([0.1]))
    assert path.delta[0] == pytest.approx(0.1 + TWO_PI - 6.0, abs=1e-12)
    assert path.length == pytest.approx(abs(path.delta[0]))
    with pytest.raises(InvalidInputError):
        plan_path(table, wrap([6.0, 0.0]), wrap([0.1]))


def test_step_size_bound_values():
    assert step_size_bound(0.5, 1.0, 1.0) == pytest.approx(0.25, rel=1e-15)
    rho = certified_radius_1d(2.0, 6.0)
    assert step_size_bound(rho, 1.0, 1.0) == pytest.approx(1.0 / 12.0, rel=1e-15)
    assert step_size_bound(10.0, 1.0, 0.1) == math.pi / 2.0
    assert step_size_bound(math.inf, 1.0, 1.0) == math.pi / 2.0
    assert step_size_bound(0.5, 1.0, 0.0) == math.pi / 2.0


def test_step_size_bound_rejects_bad_inputs():
    with pytest.raises(InvalidInputError):
        step_size_bound(0.5, 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        step_size_bound(-1.0, 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        step_size_bound(0.5, 1.0, -1.0)


def _min_record(table, anchor_index=0):
    min_ids = set(table.topology.min_component_ids)
    return next(
        r for r in table.records_at(anchor_index) if r.component_id in min_ids
    )


def test_track_point_translation_to_distant_fibre(default_tables):
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    record = _min_record(table)
    path = plan_path(table, table.anchors[0], wrap([2.0]))
    lifted = track_point(p, record, path, table.bounds, table.build.tol)
    assert lifted.component_id == record.component_id
    assert lifted.samples[0].t == 0.0
    assert lifted.samples[-1].t == 1.0
    assert lifted.end_x.coords[0] == pytest.approx(2.0, abs=1e-9)
    assert lifted.all_certified
    # Every accepted sample is critical on its own fibre.
    for s in lifted.samples:
        theta_s = path.point_at(s.t)
        g = np.asarray(p.fibre_grad(s.x.array, theta_s.array), dtype=float)
        assert float(np.linalg.norm(g)) <= 10.0 * table.build.tol


def test_track_point_zero_length_path(default_tables):
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    record = _min_record(table)
    path = plan_path(table, table.anchors[0], table.anchors[0])
    lifted = track_point(p, record, path, table.bounds, table.build.tol)
    assert len(lifted.samples) == 1
    assert lifted.samples[0].t == 0.0
    assert lifted.samples[0].certified
    assert lifted.end_x == record.x


def test_track_point_rejects_non_critical_start(default_tables):
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    record = dataclasses.replace(_min_record(table), x=wrap([0.5]))
    path = plan_path(table, table.anchors[0], wrap([1.0]))
    with pytest.raises(InvalidInputError, match="not critical"):
        track_point(p, record, path, table.bounds, table.build.tol)


def test_track_point_winding_monodromy(default_tables):
    table = default_tables["winding"]
    p = get_catalog_problem("winding")
    record = _min_record(table)
    loop = ParameterPath(start=table.anchors[0], delta=(TWO_PI,))
    lifted = track_point(p, record, loop, table.bounds, table.build.tol)
    # One loop of the base carries each minimum to the other one, half a
    # fibre turn away; two loops close up.
    shifted = wrap([record.x.coords[0] + math.pi])
    assert geodesic_distance(lifted.end_x, shifted) <= 1e-8
    assert lifted.all_certified
    double = ParameterPath(start=table.anchors[0], delta=(2.0 * TWO_PI,))
    closed = track_point(p, record, double, table.bounds, table.build.tol)
    assert geodesic_distance(closed.end_x, record.x) <= 1e-8


def test_track_point_step_underflow():
    # The gradient equals the base coordinate, so it vanishes only at the
    # path start and no corrector step can ever converge beyond it.
    stuck = ProblemDefinition(
        name="stuck",
        shape=BundleShape(1, 1),
        value=lambda x, th: x[0] * th[0],
        fibre_grad=lambda x, th: np.array([th[0]]),
        fibre_hess=lambda x, th: np.array([[1.0]]),
    )
    record = CriticalPointRecord(
        anchor_index=0,
        x=wrap([0.0]),
        index=0,
        component_id=0,
        f_value=0.0,
        hess_inv_norm=1.0,
    )
    path = ParameterPath(start=wrap([0.0]), delta=(1.0,))
    bounds = DerivativeBounds(alpha=1.0, beta=1.0)
    with pytest.raises(TrackingFailedError, match="underflow"):
        track_point(stuck, record, path, bounds, 1e-9)


def test_track_point_detects_index_change_across_degeneracy():
    # f = -cos(theta) cos(x): x = 0 stays critical for every theta but flips
    # from minimum to maximum at theta = pi/2. Claiming alpha = 0 makes the
    # tracker step right across the flip in one go, and the index check on
    # the landing fibre must refuse the lift.
    flipper = ProblemDefinition(
        name="flipper",
        shape=BundleShape(1, 1),
        value=lambda x, th: -math.cos(th[0]) * np.cos(x[0]),
        fibre_grad=lambda x, th: np.array([math.cos(th[0]) * math.sin(x[0])]),
        fibre_hess=lambda x, th: np.array([[math.cos(th[0]) * math.cos(x[0])]]),
    )
    record = CriticalPointRecord(
        anchor_index=0,
        x=wrap([0.0]),
        index=0,
        component_id=0,
        f_value=-math.cos(0.2),
        hess_inv_norm=1.0 / math.cos(0.2),
    )
    path = ParameterPath(start=wrap([0.2]), delta=(2.0,))
    bounds = DerivativeBounds(alpha=0.0, beta=1.0)
    with pytest.raises(InconsistencyError, match="index"):
        track_point(flipper, record, path, bounds, 1e-9)


def test_query_translation_matches_closed_form(default_tables):
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    result = query(table, p, wrap([2.5]))
    assert len(result.minimizers) == 1
    assert result.minimizers[0].x.coords[0] == pytest.approx(2.5, abs=1e-9)
    assert result.minimizers[0].theta == wrap([2.5])
    assert result.f_value == pytest.approx(-1.0, abs=1e-12)
    assert len(result.tracked) == 1
    assert result.all_steps_certified


def test_query_competing_wells_picks_deeper_well(default_tables):
    table = default_tables["competing-wells"]
    p = get_catalog_problem("competing-wells")
    at_zero = query(table, p, wrap([0.0]))
    assert len(at_zero.minimizers) == 1
    assert at_zero.minimizers[0].x.coords[0] == pytest.approx(math.pi, abs=1e-6)
    assert at_zero.f_value == pytest.approx(-1.5, abs=1e-9)
    past_flip = query(table, p, wrap([math.pi]))
    assert len(past_flip.minimizers) == 1
    assert geodesic_distance(past_flip.minimizers[0].x, wrap([0.0])) <= 1e-6
    assert past_flip.f_value == pytest.approx(-1.5, abs=1e-9)


def test_query_competing_wells_reports_tie(default_tables):
    table = default_tables["competing-wells"]
    p = get_catalog_problem("competing-wells")
    result = query(table, p, wrap([math.pi / 2.0]))
    assert len(result.minimizers) == 2
    xs = [m.x for m in result.minimizers]
    assert geodesic_distance(xs[0], wrap([0.0])) <= 1e-6
    assert geodesic_distance(xs[1], wrap([math.pi])) <= 1e-6
    assert result.f_value == pytest.approx(-1.0, abs=1e-9)


def test_query_modes_agree_across_catalog(default_tables):
    rng = np.random.default_rng(3)
    for name in catalog_names():
        table = default_tables[name]
        p = get_catalog_problem(name)
        for theta in rng.uniform(0.0, TWO_PI, size=10):
            full = query(table, p, wrap([theta]))
            guided = query(table, p, wrap([theta]), mode="region-guided")
            assert len(guided.tracked) <= len(full.tracked)
            assert guided.f_value == pytest.approx(full.f_value, abs=1e-10)
            assert len(guided.minimizers) == len(full.minimizers)
            for a, b in zip(guided.minimizers, full.minimizers):
                assert geodesic_distance(a.x, b.x) <= 1e-8


def test_query_region_guided_tracks_fewer_paths(default_tables):
    table = default_tables["competing-wells"]
    p = get_catalog_problem("competing-wells")
    guided = query(table, p, wrap([0.3]), mode="region-guided")
    full = query(table, p, wrap([0.3]))
    assert len(guided.tracked) == 1
    assert len(full.tracked) == 2
    assert guided.f_value == pytest.approx(full.f_value, abs=1e-12)


def test_query_euler_predictor_agrees_and_counts_mixed(default_tables):
    table = default_tables["two-harmonic"]
    p = get_catalog_problem("two-harmonic")
    plain = query(table, p, wrap([2.2]))
    euler = query(table, p, wrap([2.2]), use_euler=True)
    assert euler.evaluations.mixed > 0
    assert plain.evaluations.mixed == 0
    assert euler.f_value == pytest.approx(plain.f_value, abs=1e-10)
    assert geodesic_distance(euler.minimizers[0].x, plain.minimizers[0].x) <= 1e-8


def test_query_evaluation_budget_is_small(default_tables):
    for name in catalog_names():
        table = default_tables[name]
        p = get_catalog_problem(name)
        result = query(table, p, wrap([1.7]))
        assert result.evaluations.value <= 4
        assert result.evaluations.grad <= 300
        assert result.evaluations.hess <= 300


def test_query_rejects_unknown_mode_and_foreign_table(default_tables):
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    with pytest.raises(InvalidConfigError):
        query(table, p, wrap([0.5]), mode="exhaustive")
    with pytest.raises(TableMismatchError):
        query(table, get_catalog_problem("winding"), wrap([0.5]))
    renamed = dataclasses.replace(p, params={"detuning": 0.5})
    with pytest.raises(TableMismatchError):
        query(table, renamed, wrap([0.5]))


def test_query_stream_reports_per_item_errors(default_tables):
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    outcomes = query_stream(table, p, [wrap([0.5]), wrap([0.5, 0.5]), wrap([1.5])])
    assert [o.ok for o in outcomes] == [True, False, True]
    assert isinstance(outcomes[1].error, InvalidInputError)
    assert outcomes[1].result is None
    for o in (outcomes[0], outcomes[2]):
        assert o.error is None
        assert o.result.f_value == pytest.approx(-1.0, abs=1e-12)


def test_query_translation_equivariance(default_tables):
    # Translating theta translates the minimiser by exactly the same amount.
    table = default_tables["translation"]
    p = get_catalog_problem("translation")
    rng = np.random.default_rng(11)
    for theta in rng.uniform(0.0, TWO_PI, size=20):
        result = query(table, p, wrap([theta]))
        assert geodesic_distance(result.minimizers[0].x, wrap([theta])) <= 1e-9
