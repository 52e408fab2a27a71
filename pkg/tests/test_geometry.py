"""Exercises the angle arithmetic everything else leans on.

Covered here: canonical wrapping into [0, 2*pi) for positive, negative, and
boundary inputs; the shortest signed displacement including its tie-break to
+pi at antipodal pairs; the closure property wrap(a + delta) == b on random
pairs in several dimensions; straight paths evaluated at interior and
endpoint parameters plus their continuity in the universal cover; the
lexicographic anchor lattice helper; and validation errors for empty or
non-finite vectors, dimension mismatches, bad bundle shapes, and path
parameters outside [0, 1].
"""

import math

import numpy as np
import pytest

from torusopt import (
    AngleVec,
    BundleShape,
    InvalidInputError,
    ParameterPath,
    geodesic_delta,
    geodesic_distance,
    path_point,
    wrap,
)
from torusopt.geometry import TWO_PI, as_angle_grid, geodesic_path


def test_wrap_examples():
    assert wrap([7.0]).coords[0] == pytest.approx(7.0 - TWO_PI, abs=1e-15)
    assert wrap([-0.1]).coords[0] == pytest.approx(TWO_PI - 0.1, abs=1e-15)
    assert wrap([0.0]).coords[0] == 0.0
    assert wrap([TWO_PI]).coords[0] == 0.0
    assert wrap([1.0, -1.0]).coords == pytest.approx((1.0, TWO_PI - 1.0))


def test_wrap_is_canonical_on_random_inputs():
    rng = np.random.default_rng(7)
    for _ in range(200):
        v = rng.uniform(-50.0, 50.0, size=rng.integers(1, 4))
        w = wrap(v)
        assert all(0.0 <= c < TWO_PI for c in w.coords)


def test_wrap_periodicity():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = rng.uniform(0.0, TWO_PI, size=2)
        k = rng.integers(-2, 3, size=2)
        shifted = wrap(a + k * TWO_PI)
        assert np.allclose(shifted.array, wrap(a).array, atol=1e-12)


def test_wrap_rejects_non_finite_and_empty():
    with pytest.raises(InvalidInputError):
        wrap([np.nan])
    with pytest.raises(InvalidInputError):
        wrap([np.inf, 0.0])
    with pytest.raises(InvalidInputError):
        AngleVec(())


def test_geodesic_delta_examples():
    d = geodesic_delta(wrap([6.2]), wrap([0.1]))
    assert d[0] == pytest.approx(0.18318530717958605, abs=1e-12)
    assert geodesic_delta(wrap([1.0]), wrap([1.0])) == (0.0,)
    tie = geodesic_delta(wrap([0.0]), wrap([math.pi]))
    assert tie[0] == math.pi


def test_geodesic_delta_range_and_closure():
    rng = np.random.default_rng(3)
    for _ in range(500):
        dim = int(rng.integers(1, 4))
        a = wrap(rng.uniform(0.0, TWO_PI, size=dim))
        b = wrap(rng.uniform(0.0, TWO_PI, size=dim))
        d = np.asarray(geodesic_delta(a, b))
        assert np.all(d > -math.pi) and np.all(d <= math.pi)
        closed = wrap(a.array + d)
        assert geodesic_distance(closed, b) <= 1e-12


def test_geodesic_delta_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        geodesic_delta(wrap([1.0]), wrap([1.0, 2.0]))


def test_path_point_examples():
    half = ParameterPath(start=wrap([0.0]), delta=(math.pi,))
    assert path_point(half, 0.5).coords[0] == pytest.approx(math.pi / 2, abs=1e-15)
    assert path_point(half, 0.0) == wrap([0.0])
    over = ParameterPath(start=wrap([6.0]), delta=(1.0,))
    assert path_point(over, 1.0).coords[0] == pytest.approx(
        7.0 - TWO_PI, abs=1e-12
    )


def test_path_point_parameter_range():
    path = ParameterPath(start=wrap([0.0]), delta=(1.0,))
    with pytest.raises(InvalidInputError):
        path_point(path, -0.01)
    with pytest.raises(InvalidInputError):
        path_point(path, 1.01)


def test_path_continuity_in_cover():
    path = ParameterPath(start=wrap([6.0]), delta=(1.3,))
    ts = np.linspace(0.0, 1.0, 50)
    for t1, t2 in zip(ts, ts[1:]):
        step = geodesic_distance(path_point(path, t1), path_point(path, t2))
        assert step == pytest.approx((t2 - t1) * 1.3, abs=1e-12)


def test_geodesic_path_reaches_target():
    rng = np.random.default_rng(19)
    for _ in range(200):
        dim = int(rng.integers(1, 3))
        a = wrap(rng.uniform(0.0, TWO_PI, size=dim))
        b = wrap(rng.uniform(0.0, TWO_PI, size=dim))
        path = geodesic_path(a, b)
        assert path.start == a
        assert geodesic_distance(path_point(path, 1.0), b) <= 1e-12
        assert path.length <= math.pi * math.sqrt(dim) + 1e-12


def test_path_length_and_zero_path():
    path = ParameterPath(start=wrap([1.0]), delta=(0.0,))
    assert path.length == 0.0
    assert path_point(path, 1.0) == wrap([1.0])
    diag = ParameterPath(start=wrap([0.0, 0.0]), delta=(3.0, 4.0))
    assert diag.length == pytest.approx(5.0)


def test_as_angle_grid_is_lexicographic_and_uniform():
    grid = as_angle_grid(3, 2)
    assert len(grid) == 9
    coords = [g.coords for g in grid]
    assert coords == sorted(coords)
    assert coords[0] == (0.0, 0.0)
    assert coords[1][1] == pytest.approx(TWO_PI / 3)
    spacing = {round(c[0], 12) for c in coords}
    assert len(spacing) == 3


def test_bundle_shape_validation():
    with pytest.raises(InvalidInputError):
        BundleShape(fibre_dim=0, base_dim=1)
    with pytest.raises(InvalidInputError):
        BundleShape(fibre_dim=1, base_dim=0)
    shape = BundleShape(fibre_dim=2, base_dim=1)
    assert (shape.fibre_dim, shape.base_dim) == (2, 1)


def test_angle_vec_is_hashable_and_canonical():
    a = AngleVec((7.0,))
    b = wrap([7.0 - TWO_PI])
    assert a == b
    assert hash(a) == hash(b)
    assert {a, b} == {a}
