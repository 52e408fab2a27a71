"""Exception taxonomy for torusopt.

Every failure mode surfaced by the library maps to one of the classes below,
all rooted at :class:`TorusOptError` so callers can catch the whole family.
The CLI maps these onto distinct process exit codes (see ``torusopt.cli``).
"""

from __future__ import annotations

__all__ = [
    "TorusOptError",
    "InvalidInputError",
    "InvalidConfigError",
    "InvalidProblemError",
    "DegenerateCriticalPointError",
    "ResolutionTooCoarseError",
    "TrackingFailedError",
    "InconsistencyError",
    "BoundInapplicableError",
    "UnsupportedVersionError",
    "CorruptTableError",
    "TableMismatchError",
]


class TorusOptError(Exception):
    """Base class for all torusopt errors."""


class InvalidInputError(TorusOptError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class InvalidConfigError(TorusOptError):
    """A configuration value is out of range, unknown, or inconsistent."""


class InvalidProblemError(TorusOptError):
    """A problem callback returned a non-finite or mis-shaped result."""


class DegenerateCriticalPointError(TorusOptError):
    """A Hessian at (or near) a critical point is singular to working precision.

    Raised when a condition number exceeds the cutoff or an eigenvalue is
    below the degeneracy threshold; the cost family is not fibre-wise Morse
    at the offending point.
    """


class ResolutionTooCoarseError(TorusOptError):
    """A sampling grid is too coarse to separate distinct critical points."""


class TrackingFailedError(TorusOptError):
    """Predictor-corrector continuation could not complete a path.

    Signals step-size underflow: repeated halving pushed the step below
    1e-9 of the path length without an accepted sample.
    """


class InconsistencyError(TorusOptError):
    """An invariant that must hold for Morse families was violated.

    Examples: the Morse index changed along a tracked component, or two
    fibres of the same table disagree on the critical-point count.
    """


class BoundInapplicableError(TorusOptError):
    """A perturbation bound's hypothesis fails (denominator not positive)."""


class UnsupportedVersionError(TorusOptError):
    """A table file declares a format version this build does not read."""


class CorruptTableError(TorusOptError):
    """A table file failed checksum or load-time invariant revalidation."""


class TableMismatchError(TorusOptError):
    """A table was built for a different problem than the one supplied."""
