"""torusopt: certified real-time minimisation of cost families on torus bundles.

The package splits the work of minimising a smooth family f(x; theta) on the
trivial bundle T^k x T^m into an offline stage, which enumerates and connects
all fibre-wise critical points into a table, and an online stage, which
answers per-theta minimisation queries by certified homotopy tracking from
the nearest precomputed anchor fibre.
"""

from __future__ import annotations

from .errors import (
    BoundInapplicableError,
    CorruptTableError,
    DegenerateCriticalPointError,
    InconsistencyError,
    InvalidConfigError,
    InvalidInputError,
    InvalidProblemError,
    ResolutionTooCoarseError,
    TableMismatchError,
    TorusOptError,
    TrackingFailedError,
    UnsupportedVersionError,
)
from .geometry import (
    AngleVec,
    BundlePoint,
    BundleShape,
    ParameterPath,
    geodesic_delta,
    geodesic_distance,
    path_point,
    wrap,
)
from .newton import (
    CertifiedRadius,
    NewtonReport,
    averaged_hessian_test,
    certified_radius_1d,
    certified_radius_nd,
    hessian_perturbation_bound,
    newton_derivative_test_1d,
    newton_polish,
    newton_step,
)
from .problems import (
    CATALOG,
    DerivativeBounds,
    ProblemDefinition,
    catalog_names,
    estimate_alpha,
    estimate_beta,
    estimate_bounds,
    fd_check,
    get_catalog_problem,
)
from .tables import (
    BuildConfig,
    ComponentInfo,
    CriticalPointRecord,
    FibreCriticalPoint,
    PrecomputedTable,
    RegionMap,
    TopologySummary,
    build_region_map,
    build_table,
    classify_index,
    count_single_component_zones,
    enumerate_fibre_critical_points,
    load_table,
    save_table,
    select_anchors,
    trace_components,
)
from .tracking import (
    EvalCounts,
    LiftedPath,
    PathSample,
    QueryOutcome,
    SolveResult,
    nearest_anchor,
    plan_path,
    query,
    query_stream,
    step_size_bound,
    track_point,
)
from .oracle import (
    InvariantCheck,
    OracleCriticalPoint,
    OracleResult,
    SuiteReport,
    oracle_critical_points,
    oracle_fibre_minimum,
    run_invariant_suite,
)
from .config import RunConfig, load_run_config

__version__ = "0.1.0"

__all__ = [
    "AngleVec",
    "BundlePoint",
    "BundleShape",
    "ParameterPath",
    "geodesic_delta",
    "geodesic_distance",
    "path_point",
    "wrap",
    "CertifiedRadius",
    "NewtonReport",
    "averaged_hessian_test",
    "certified_radius_1d",
    "certified_radius_nd",
    "hessian_perturbation_bound",
    "newton_derivative_test_1d",
    "newton_polish",
    "newton_step",
    "CATALOG",
    "DerivativeBounds",
    "ProblemDefinition",
    "catalog_names",
    "estimate_alpha",
    "estimate_beta",
    "estimate_bounds",
    "fd_check",
    "get_catalog_problem",
    "BuildConfig",
    "ComponentInfo",
    "CriticalPointRecord",
    "FibreCriticalPoint",
    "PrecomputedTable",
    "RegionMap",
    "TopologySummary",
    "build_region_map",
    "build_table",
    "classify_index",
    "count_single_component_zones",
    "enumerate_fibre_critical_points",
    "load_table",
    "save_table",
    "select_anchors",
    "trace_components",
    "EvalCounts",
    "LiftedPath",
    "PathSample",
    "QueryOutcome",
    "SolveResult",
    "nearest_anchor",
    "plan_path",
    "query",
    "query_stream",
    "step_size_bound",
    "track_point",
    "InvariantCheck",
    "OracleCriticalPoint",
    "OracleResult",
    "SuiteReport",
    "oracle_critical_points",
    "oracle_fibre_minimum",
    "run_invariant_suite",
    "RunConfig",
    "load_run_config",
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
    "__version__",
]
