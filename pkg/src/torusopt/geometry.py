"""Angle arithmetic on flat tori and straight parameter paths.

The total space is the trivial bundle M = T^k x T^m with the flat product
metric. Angles live in the canonical interval [0, 2*pi); geodesics between
nearby points are straight lines in any 2*pi-periodic chart. Paths carry an
unwrapped displacement (a lift to the universal cover) so that interpolation
never jumps branches mid-path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "TWO_PI",
    "AngleVec",
    "BundleShape",
    "BundlePoint",
    "ParameterPath",
    "wrap",
    "wrap_array",
    "geodesic_delta",
    "geodesic_delta_array",
    "geodesic_distance",
    "geodesic_path",
    "path_point",
    "as_angle_grid",
]

TWO_PI = 2.0 * math.pi


def wrap_array(values: np.ndarray) -> np.ndarray:
    """Reduce angles elementwise to the canonical interval [0, 2*pi).

    np.mod can round up to exactly 2*pi for tiny negative inputs, which
    would violate the half-open interval, so those hits are zeroed.
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("angles must be finite")
    out = np.mod(values, TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    return out


@dataclass(frozen=True)
class AngleVec:
    """An immutable point on T^n, stored as canonical angles in [0, 2*pi).

    Coordinates are kept as a tuple so instances hash and compare exactly;
    use :attr:`array` for numeric work.
    """

    coords: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(tuple(self.coords)) == 0:
            raise InvalidInputError("angle vectors need at least one coordinate")
        canon = wrap_array(np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "coords", tuple(float(c) for c in canon))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def __iter__(self):
        return iter(self.coords)

    def __len__(self) -> int:
        return len(self.coords)


def wrap(values: Iterable[float] | np.ndarray | AngleVec) -> AngleVec:
    """Wrap a real vector onto the torus, returning canonical angles."""
    if isinstance(values, AngleVec):
        return values
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a 1-d angle vector, got shape {arr.shape}")
    return AngleVec(tuple(wrap_array(arr)))


@dataclass(frozen=True)
class BundleShape:
    """Dimensions of the trivial bundle: fibre torus T^k over base torus T^m."""

    fibre_dim: int
    base_dim: int

    def __post_init__(self) -> None:
        if self.fibre_dim < 1 or self.base_dim < 1:
            raise InvalidInputError(
                f"bundle dimensions must be >= 1, got k={self.fibre_dim}, m={self.base_dim}"
            )


@dataclass(frozen=True)
class BundlePoint:
    """A point (x, theta) of the total space: fibre coordinates over a base point."""

    x: AngleVec
    theta: AngleVec


def geodesic_delta_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest per-coordinate displacement from a to b, each in (-pi, pi].

    Antipodal ties (distance exactly pi) resolve to +pi, so
    wrap(a + delta) == b up to floating round-off.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = wrap_array(b - a)
    return np.where(d > math.pi, d - TWO_PI, d)


def geodesic_delta(a: AngleVec, b: AngleVec) -> tuple[float, ...]:
    """Per-coordinate shortest displacement between two torus points."""
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return tuple(float(v) for v in geodesic_delta_array(a.array, b.array))


def geodesic_distance(a: AngleVec | np.ndarray, b: AngleVec | np.ndarray) -> float:
    """Euclidean length of the shortest displacement between two torus points."""
    aa = a.array if isinstance(a, AngleVec) else np.asarray(a, dtype=float)
    bb = b.array if isinstance(b, AngleVec) else np.asarray(b, dtype=float)
    if aa.shape != bb.shape:
        raise InvalidInputError(f"dimension mismatch: {aa.shape} vs {bb.shape}")
    return float(np.linalg.norm(geodesic_delta_array(aa, bb)))


@dataclass(frozen=True)
class ParameterPath:
    """A straight path t -> wrap(start + t*delta) in the base torus, t in [0, 1].

    delta is an unwrapped displacement in the universal cover; it may exceed
    pi per coordinate (e.g. a full generator loop has delta 2*pi).
    """

    start: AngleVec
    delta: tuple[float, ...]

    def __post_init__(self) -> None:
        d = np.asarray(self.delta, dtype=float)
        if d.ndim != 1 or d.shape[0] != self.start.dim:
            raise InvalidInputError(
                f"delta shape {d.shape} does not match start dimension {self.start.dim}"
            )
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("path delta must be finite")
        object.__setattr__(self, "delta", tuple(float(v) for v in d))

    @property
    def length(self) -> float:
        """Euclidean norm of the unwrapped displacement."""
        return float(np.linalg.norm(self.delta))

    def point_at(self, t: float) -> AngleVec:
        """Interpolate along the path; t must lie in [0, 1]."""
        if not (0.0 <= t <= 1.0):
            raise InvalidInputError(f"path parameter t={t} outside [0, 1]")
        return wrap(self.start.array + t * np.asarray(self.delta))


def path_point(path: ParameterPath, t: float) -> AngleVec:
    """Evaluate a parameter path at t in [0, 1]."""
    return path.point_at(t)


def geodesic_path(start: AngleVec, end: AngleVec) -> ParameterPath:
    """The straight geodesic from start to end using per-coordinate shortest deltas."""
    return ParameterPath(start=start, delta=geodesic_delta(start, end))


def as_angle_grid(per_dim: int, dim: int) -> list[AngleVec]:
    """Uniform lattice {2*pi*j/per_dim}^dim in lexicographic order."""
    if per_dim < 1 or dim < 1:
        raise InvalidInputError("grid sizes must be positive")
    axis = [TWO_PI * j / per_dim for j in range(per_dim)]
    points: list[AngleVec] = []
    idx = [0] * dim
    while True:
        points.append(AngleVec(tuple(axis[i] for i in idx)))
        for pos in reversed(range(dim)):
            idx[pos] += 1
            if idx[pos] < per_dim:
                break
            idx[pos] = 0
        else:
            break
    return points
