"""Offline stage: critical-point tables built once per problem.

Everything computed ahead of query time lives here: anchor-fibre selection,
exhaustive fibre-wise critical-point enumeration, Morse-index classification,
tracing of critical points into connected components (with their fibre
intersection counts), the region lookup map for global-minimiser hints, and
a canonical serialized form.

The table file is a single UTF-8 JSON document. Every real number is written
as a fixed 17-significant-digit decimal string ('%.17g'), which round-trips
IEEE doubles exactly; keys are emitted sorted, so save -> load -> save is
byte-identical. A sha256 checksum over the canonical compact dump of the
"table" subobject detects tampering, and load revalidates the structural
invariants (constant per-fibre count, index/component consistency, region
cells, and, for catalog problems, the stored gradient norms).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CorruptTableError,
    DegenerateCriticalPointError,
    InconsistencyError,
    InvalidConfigError,
    InvalidInputError,
    ResolutionTooCoarseError,
    UnsupportedVersionError,
)
from .geometry import (
    TWO_PI,
    AngleVec,
    BundleShape,
    ParameterPath,
    as_angle_grid,
    geodesic_delta_array,
    wrap,
)
from .newton import COND_LIMIT, newton_polish_chart, symmetric_spectrum
from .problems import (
    CATALOG,
    DerivativeBounds,
    ProblemDefinition,
    estimate_bounds,
)

__all__ = [
    "FORMAT_VERSION",
    "DEGENERACY_RELATIVE",
    "BuildConfig",
    "FibreCriticalPoint",
    "CriticalPointRecord",
    "ComponentInfo",
    "TopologySummary",
    "RegionMap",
    "PrecomputedTable",
    "select_anchors",
    "enumerate_fibre_critical_points",
    "classify_index",
    "trace_components",
    "build_region_map",
    "build_table",
    "save_table",
    "load_table",
    "count_single_component_zones",
]

FORMAT_VERSION = 1

# Eigenvalues below this fraction of ||H|| are treated as zero (degenerate).
DEGENERACY_RELATIVE = 1e-9

DEDUP_FACTOR = 10.0


@dataclass(frozen=True)
class BuildConfig:
    """Grid densities, tolerances, and the seed recorded with a table."""

    anchors_per_dim: int = 16
    fibre_grid_per_dim: int = 64
    region_grid_per_dim: int = 64
    tol: float = 1e-9
    value_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.anchors_per_dim < 2:
            raise InvalidConfigError(
                f"anchors_per_dim must be >= 2, got {self.anchors_per_dim}"
            )
        if self.fibre_grid_per_dim < 8:
            raise InvalidConfigError(
                f"fibre_grid_per_dim must be >= 8, got {self.fibre_grid_per_dim}"
            )
        if self.region_grid_per_dim < 2:
            raise InvalidConfigError(
                f"region_grid_per_dim must be >= 2, got {self.region_grid_per_dim}"
            )
        if not (0.0 < self.tol <= 1e-3):
            raise InvalidConfigError(f"tol must lie in (0, 1e-3], got {self.tol}")
        if not (0.0 < self.value_tol <= 1e-2):
            raise InvalidConfigError(
                f"value_tol must lie in (0, 1e-2], got {self.value_tol}"
            )


@dataclass(frozen=True)
class FibreCriticalPoint:
    """A classified critical point on a single fibre, before component tracing."""

    x: AngleVec
    index: int
    f_value: float
    hess_inv_norm: float


@dataclass(frozen=True)
class CriticalPointRecord:
    """A table entry: one critical point on one anchor fibre."""

    anchor_index: int
    x: AngleVec
    index: int
    component_id: int
    f_value: float
    hess_inv_norm: float


@dataclass(frozen=True)
class ComponentInfo:
    """Per-component topology: fibre intersection count and Morse data."""

    component_id: int
    intersections_per_fibre: int
    is_min: bool
    morse_index: int


@dataclass(frozen=True)
class TopologySummary:
    """How the critical set decomposes into components over the base."""

    num_components: int
    components: tuple[ComponentInfo, ...]

    def component(self, component_id: int) -> ComponentInfo:
        return self.components[component_id]

    @property
    def min_component_ids(self) -> tuple[int, ...]:
        return tuple(c.component_id for c in self.components if c.is_min)


@dataclass(frozen=True)
class RegionMap:
    """Per-cell hint sets: which min-components can attain the global minimum.

    Cells tile the base torus uniformly, grid_per_dim per dimension, stored
    flattened in lexicographic cell-index order.
    """

    grid_per_dim: int
    base_dim: int
    cells: tuple[tuple[int, ...], ...]

    def cell_index(self, theta: AngleVec) -> int:
        width = TWO_PI / self.grid_per_dim
        flat = 0
        for c in theta.coords:
            i = int(c / width)
            if i >= self.grid_per_dim:
                i = self.grid_per_dim - 1
            flat = flat * self.grid_per_dim + i
        return flat

    def components_for(self, theta: AngleVec) -> tuple[int, ...]:
        return self.cells[self.cell_index(theta)]


@dataclass(frozen=True)
class PrecomputedTable:
    """Everything the online tracker needs, built once per problem."""

    format_version: int
    problem_name: str
    problem_params: dict[str, float]
    shape: BundleShape
    anchors: tuple[AngleVec, ...]
    records: tuple[CriticalPointRecord, ...]
    topology: TopologySummary
    regions: RegionMap
    bounds: DerivativeBounds
    build: BuildConfig

    def records_at(self, anchor_index: int) -> tuple[CriticalPointRecord, ...]:
        return tuple(r for r in self.records if r.anchor_index == anchor_index)

    @property
    def per_fibre_count(self) -> int:
        return len(self.records) // len(self.anchors)


# --------------------------------------------------------------------------
# Anchor selection and fibre enumeration
# --------------------------------------------------------------------------


def select_anchors(shape: BundleShape, per_dim: int) -> list[AngleVec]:
    """Uniform anchor lattice {2*pi*j/per_dim}^m in lexicographic order."""
    if per_dim < 2:
        raise InvalidConfigError(f"anchor per_dim must be >= 2, got {per_dim}")
    return as_angle_grid(per_dim, shape.base_dim)


def classify_index(hessian: np.ndarray) -> int:
    """Morse index: the number of negative Hessian eigenvalues.

    Raises DegenerateCriticalPointError when any eigenvalue magnitude is
    below 1e-9 * ||H|| (the point cannot be classified).
    """
    eigs, norm, _ = symmetric_spectrum(hessian)
    if norm == 0.0 or np.any(np.abs(eigs) < DEGENERACY_RELATIVE * norm):
        raise DegenerateCriticalPointError(
            f"near-zero Hessian eigenvalue (spectrum {eigs.tolist()})"
        )
    return int(np.sum(eigs < 0.0))


def _fibre_nodes(k: int, per_dim: int) -> np.ndarray:
    axes = [np.linspace(0.0, TWO_PI, per_dim, endpoint=False) for _ in range(k)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _polish_seeds_batched(
    problem: ProblemDefinition,
    theta: np.ndarray,
    seeds: np.ndarray,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Newton-polish many seeds on one fibre at once; returns converged points.

    Seeds whose Hessian turns singular or whose iterates leave the chart
    neighbourhood are dropped; for grid seeding every critical point is
    reached from many seeds, so drops are harmless.
    """
    n, k = seeds.shape
    x = seeds.astype(float).copy()
    alive = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    for _ in range(max_iter + 1):
        act = np.flatnonzero(alive & ~converged)
        if act.size == 0:
            break
        g = np.asarray(problem.fibre_grad(x[act], theta), dtype=float).reshape(-1, k)
        bad = ~np.all(np.isfinite(g), axis=1)
        gnorm = np.linalg.norm(g, axis=1)
        just_done = (gnorm <= tol) & ~bad
        converged[act[just_done]] = True
        alive[act[bad]] = False
        keep_mask = ~just_done & ~bad
        todo = act[keep_mask]
        if todo.size == 0:
            continue
        H = np.asarray(problem.fibre_hess(x[todo], theta), dtype=float).reshape(-1, k, k)
        eigs = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, 1, 2)))
        mags = np.abs(eigs)
        mx = mags.max(axis=1)
        mn = mags.min(axis=1)
        singular = (mx == 0.0) | (mn < mx / COND_LIMIT)
        alive[todo[singular]] = False
        step = np.linalg.solve(H[~singular], g[keep_mask][~singular][..., None])[..., 0]
        diverging = np.linalg.norm(step, axis=1) > 2.0 * TWO_PI
        ok = todo[~singular]
        alive[ok[diverging]] = False
        keep = ok[~diverging]
        x[keep] = x[keep] - step[~diverging]
    return x[alive & converged]


def _polish_seeds_scalar(
    problem: ProblemDefinition,
    theta: np.ndarray,
    seeds: np.ndarray,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    def grad(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_grad(x, theta), dtype=float)

    def hess(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_hess(x, theta), dtype=float)

    out = []
    for seed in seeds:
        try:
            report = newton_polish_chart(grad, hess, seed, tol=tol, max_iter=max_iter)
        except DegenerateCriticalPointError:
            continue
        if report.converged and np.linalg.norm(report.final_x - seed) <= 2.0 * TWO_PI:
            out.append(report.final_x)
    return np.asarray(out, dtype=float).reshape(-1, seeds.shape[1])


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def groups(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return out


def enumerate_fibre_critical_points(
    problem: ProblemDefinition,
    theta: AngleVec,
    fibre_grid_per_dim: int = 64,
    tol: float = 1e-9,
) -> list[FibreCriticalPoint]:
    """All critical points of the fibre cost at theta, classified and sorted.

    Seeds Newton polish from every node of a uniform fibre lattice, merges
    converged points closer than 10*tol (single-linkage), re-polishes one
    representative per cluster, and classifies each by its Hessian spectrum.

    Raises DegenerateCriticalPointError if any surviving point has Hessian
    condition number above 1e12, and ResolutionTooCoarseError if distinct
    representatives end up closer than the dedup radius.
    """
    if fibre_grid_per_dim < 2:
        raise InvalidConfigError(
            f"fibre_grid_per_dim must be >= 2, got {fibre_grid_per_dim}"
        )
    if tol <= 0.0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    k = problem.shape.fibre_dim
    theta_arr = theta.array
    seeds = _fibre_nodes(k, fibre_grid_per_dim)
    polish = _polish_seeds_batched if problem.vectorized else _polish_seeds_scalar
    pts = polish(problem, theta_arr, seeds, tol, max_iter=60)
    if pts.shape[0] == 0:
        return []
    pts = np.mod(pts, TWO_PI)
    pts[pts >= TWO_PI] = 0.0

    # Single-linkage clustering at the dedup radius.
    radius = DEDUP_FACTOR * tol
    n = pts.shape[0]
    uf = _UnionFind(n)
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    for i in range(n):
        # Points are lexicographically sorted; only a bounded window can be
        # within the dedup radius in the first coordinate, except across the
        # 0/2*pi seam, handled by the full pass below for small n.
        for j in range(i + 1, n):
            if pts[j, 0] - pts[i, 0] > radius and pts[j, 0] - pts[i, 0] < TWO_PI - radius:
                break
            d = float(np.linalg.norm(geodesic_delta_array(pts[i], pts[j])))
            if d < radius:
                uf.union(i, j)
    # Seam pass: compare leading points against trailing ones.
    for i in range(n):
        if pts[i, 0] > radius:
            break
        for j in range(n - 1, -1, -1):
            if TWO_PI - pts[j, 0] > radius:
                break
            d = float(np.linalg.norm(geodesic_delta_array(pts[i], pts[j])))
            if d < radius:
                uf.union(i, j)

    def grad(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_grad(x, theta_arr), dtype=float)

    def hess(x: np.ndarray) -> np.ndarray:
        return np.asarray(problem.fibre_hess(x, theta_arr), dtype=float)

    results: list[FibreCriticalPoint] = []
    for _, members in sorted(uf.groups().items()):
        rep = pts[members[0]]
        report = newton_polish_chart(grad, hess, rep, tol=tol, max_iter=40)
        if not report.converged:
            continue
        x = wrap(report.final_x)
        H = hess(x.array)
        eigs, norm, cond = symmetric_spectrum(H)
        if norm == 0.0 or cond > COND_LIMIT:
            raise DegenerateCriticalPointError(
                f"{problem.name}: degenerate critical point at x={x.coords}, "
                f"theta={theta.coords} (condition number {cond:.3e})"
            )
        index = classify_index(H)
        value = float(problem.value(x.array, theta_arr))
        results.append(
            FibreCriticalPoint(
                x=x,
                index=index,
                f_value=value,
                hess_inv_norm=float(1.0 / np.min(np.abs(eigs))),
            )
        )

    results.sort(key=lambda p: p.x.coords)
    for a, b in itertools.combinations(results, 2):
        d = float(np.linalg.norm(geodesic_delta_array(a.x.array, b.x.array)))
        if d < radius:
            raise ResolutionTooCoarseError(
                f"{problem.name}: critical points {a.x.coords} and {b.x.coords} "
                f"separated by {d:.3e} < dedup radius {radius:.3e}"
            )
    return results


# --------------------------------------------------------------------------
# Component tracing
# --------------------------------------------------------------------------


def _anchor_grid_maps(per_dim: int, m: int) -> tuple[list[tuple[int, ...]], dict[tuple[int, ...], int]]:
    tuples = list(itertools.product(range(per_dim), repeat=m))
    return tuples, {t: i for i, t in enumerate(tuples)}


def trace_components(
    problem: ProblemDefinition,
    anchors: Sequence[AngleVec],
    per_anchor: Sequence[Sequence[FibreCriticalPoint]],
    bounds: DerivativeBounds,
    tol: float = 1e-9,
) -> tuple[TopologySummary, list[list[int]]]:
    """Connect anchor records into components by tracking along grid edges.

    Every record is tracked along the positive edge to each adjacent anchor
    (wrap-around edges included, which closes the generator loops); the lift's
    endpoint is matched to a record on the target fibre and the two are
    unioned. Returns the topology summary plus component ids aligned with
    per_anchor.

    Raises InconsistencyError when a lift lands on no known record, when a
    component mixes Morse indices, or when its fibre intersection count is
    not constant across anchors.
    """
    from .tracking import track_point  # deferred: tracking depends on this module

    m = problem.shape.base_dim
    per_dim = round(len(anchors) ** (1.0 / m))
    if per_dim**m != len(anchors):
        raise InvalidInputError("anchor count is not a full lattice")
    tuples, flat_of = _anchor_grid_maps(per_dim, m)

    counts = [len(recs) for recs in per_anchor]
    if len(set(counts)) != 1:
        raise InconsistencyError(f"per-anchor critical point counts differ: {counts}")
    per_fibre = counts[0]

    def node_of(a: int, r: int) -> int:
        return a * per_fibre + r

    uf = _UnionFind(len(anchors) * per_fibre)
    edge_delta = TWO_PI / per_dim

    for a_idx, a_tuple in enumerate(tuples):
        for axis in range(m):
            b_tuple = list(a_tuple)
            b_tuple[axis] = (b_tuple[axis] + 1) % per_dim
            b_idx = flat_of[tuple(b_tuple)]
            delta = np.zeros(m)
            delta[axis] = edge_delta
            path = ParameterPath(start=anchors[a_idx], delta=tuple(delta))
            targets = np.asarray([p.x.array for p in per_anchor[b_idx]])
            for r_idx, rec in enumerate(per_anchor[a_idx]):
                record = CriticalPointRecord(
                    anchor_index=a_idx,
                    x=rec.x,
                    index=rec.index,
                    component_id=-1,
                    f_value=rec.f_value,
                    hess_inv_norm=rec.hess_inv_norm,
                )
                lifted = track_point(problem, record, path, bounds, tol)
                end = lifted.samples[-1].x.array
                dists = np.linalg.norm(
                    geodesic_delta_array(np.broadcast_to(end, targets.shape), targets),
                    axis=1,
                )
                j = int(np.argmin(dists))
                if dists[j] > max(1e-6, 100.0 * tol):
                    raise InconsistencyError(
                        f"{problem.name}: lift from anchor {a_idx} record {r_idx} "
                        f"landed {dists[j]:.3e} away from every record of anchor {b_idx}"
                    )
                uf.union(node_of(a_idx, r_idx), node_of(b_idx, j))

    groups = uf.groups()
    roots = sorted(groups.keys())
    component_ids: list[list[int]] = [[-1] * per_fibre for _ in anchors]
    infos: list[ComponentInfo] = []
    for cid, root in enumerate(roots):
        members = groups[root]
        indices = set()
        at_anchor: dict[int, int] = {}
        for node in members:
            a, r = divmod(node, per_fibre)
            component_ids[a][r] = cid
            indices.add(per_anchor[a][r].index)
            at_anchor[a] = at_anchor.get(a, 0) + 1
        if len(indices) != 1:
            raise InconsistencyError(
                f"{problem.name}: component {cid} mixes Morse indices {sorted(indices)}"
            )
        b_counts = set(at_anchor.values())
        if len(at_anchor) != len(anchors) or len(b_counts) != 1:
            raise InconsistencyError(
                f"{problem.name}: component {cid} does not meet every fibre equally"
            )
        morse_index = indices.pop()
        infos.append(
            ComponentInfo(
                component_id=cid,
                intersections_per_fibre=b_counts.pop(),
                is_min=morse_index == 0,
                morse_index=morse_index,
            )
        )
    topo = TopologySummary(num_components=len(infos), components=tuple(infos))
    if sum(c.intersections_per_fibre for c in topo.components) != per_fibre:
        raise InconsistencyError(
            f"{problem.name}: component intersection counts do not add up to {per_fibre}"
        )
    return topo, component_ids


# --------------------------------------------------------------------------
# Region map
# --------------------------------------------------------------------------


def _cell_samples(idx: tuple[int, ...], width: float) -> list[tuple[float, ...]]:
    """Cell centre plus all corners, wrapped to canonical angles."""
    m = len(idx)
    centre = tuple((i + 0.5) * width for i in idx)
    corners = [
        tuple((idx[d] + off[d]) * width for d in range(m))
        for off in itertools.product((0, 1), repeat=m)
    ]
    samples = [centre] + corners
    return [tuple(wrap(np.asarray(s)).coords) for s in samples]


def build_region_map(
    problem: ProblemDefinition,
    anchors: Sequence[AngleVec],
    records: Sequence[CriticalPointRecord],
    topology: TopologySummary,
    bounds: DerivativeBounds,
    region_grid_per_dim: int = 64,
    value_tol: float = 1e-7,
    tol: float = 1e-9,
) -> RegionMap:
    """Sample each base cell and record which min-components can win there.

    For every cell, the centre and corners are visited; at each sample the
    min-components are tracked from the nearest anchor and every component
    whose best fibre value comes within value_tol of the overall best is
    listed. A cell's set is the union over its samples, so cells near value
    crossings conservatively list several components.
    """
    from .tracking import nearest_anchor_index, track_point  # deferred: module cycle

    if region_grid_per_dim < 2:
        raise InvalidConfigError(
            f"region_grid_per_dim must be >= 2, got {region_grid_per_dim}"
        )
    m = problem.shape.base_dim
    width = TWO_PI / region_grid_per_dim
    min_ids = topology.min_component_ids
    by_anchor_comp: dict[tuple[int, int], list[CriticalPointRecord]] = {}
    for r in records:
        by_anchor_comp.setdefault((r.anchor_index, r.component_id), []).append(r)

    cache: dict[tuple[float, ...], dict[int, float]] = {}

    def component_values(theta_t: tuple[float, ...]) -> dict[int, float]:
        hit = cache.get(theta_t)
        if hit is not None:
            return hit
        theta = AngleVec(theta_t)
        a = nearest_anchor_index(anchors, theta)
        delta = geodesic_delta_array(anchors[a].array, theta.array)
        path = ParameterPath(start=anchors[a], delta=tuple(delta))
        values: dict[int, float] = {}
        for cid in min_ids:
            best = math.inf
            for rec in by_anchor_comp[(a, cid)]:
                lifted = track_point(problem, rec, path, bounds, tol)
                end = lifted.samples[-1].x
                v = float(problem.value(end.array, theta.array))
                best = min(best, v)
            values[cid] = best
        cache[theta_t] = values
        return values

    cells: list[tuple[int, ...]] = []
    for idx in itertools.product(range(region_grid_per_dim), repeat=m):
        listed: set[int] = set()
        for sample in _cell_samples(idx, width):
            values = component_values(sample)
            best = min(values.values())
            listed.update(cid for cid, v in values.items() if v <= best + value_tol)
        cells.append(tuple(sorted(listed)))
    return RegionMap(
        grid_per_dim=region_grid_per_dim, base_dim=m, cells=tuple(cells)
    )


def count_single_component_zones(regions: RegionMap) -> int:
    """Count toroidally-connected runs of single-component cells.

    Adjacent cells (per axis, wrap included) listing the same single
    component belong to one zone; multi-component cells separate zones.
    """
    R = regions.grid_per_dim
    m = regions.base_dim
    n = R**m
    uf = _UnionFind(n)
    strides = [R ** (m - 1 - d) for d in range(m)]

    def neighbors(flat: int) -> list[int]:
        idx = []
        rest = flat
        for s in strides:
            idx.append(rest // s)
            rest %= s
        out = []
        for d in range(m):
            nidx = list(idx)
            nidx[d] = (nidx[d] + 1) % R
            out.append(sum(i * s for i, s in zip(nidx, strides)))
        return out

    singles = {
        i: cell[0] for i, cell in enumerate(regions.cells) if len(cell) == 1
    }
    for i, cid in singles.items():
        for j in neighbors(i):
            if singles.get(j) == cid:
                uf.union(i, j)
    return len({uf.find(i) for i in singles})


# --------------------------------------------------------------------------
# Table assembly
# --------------------------------------------------------------------------


def build_table(
    problem: ProblemDefinition,
    config: BuildConfig | None = None,
    bounds: DerivativeBounds | None = None,
) -> PrecomputedTable:
    """Run the full offline pipeline and assemble a queryable table."""
    cfg = config if config is not None else BuildConfig()
    if bounds is None:
        bounds = estimate_bounds(problem, cfg.fibre_grid_per_dim)
    anchors = tuple(select_anchors(problem.shape, cfg.anchors_per_dim))
    per_anchor = [
        enumerate_fibre_critical_points(
            problem, theta, cfg.fibre_grid_per_dim, cfg.tol
        )
        for theta in anchors
    ]
    counts = {len(recs) for recs in per_anchor}
    if len(counts) != 1:
        raise InconsistencyError(
            f"{problem.name}: fibre critical-point count varies across anchors: "
            f"{sorted(len(r) for r in per_anchor)}"
        )
    if counts == {0}:
        raise InconsistencyError(f"{problem.name}: no critical points found")
    topology, component_ids = trace_components(
        problem, anchors, per_anchor, bounds, cfg.tol
    )
    records = tuple(
        CriticalPointRecord(
            anchor_index=a,
            x=p.x,
            index=p.index,
            component_id=component_ids[a][r],
            f_value=p.f_value,
            hess_inv_norm=p.hess_inv_norm,
        )
        for a, recs in enumerate(per_anchor)
        for r, p in enumerate(recs)
    )
    regions = build_region_map(
        problem,
        anchors,
        records,
        topology,
        bounds,
        cfg.region_grid_per_dim,
        cfg.value_tol,
        cfg.tol,
    )
    return PrecomputedTable(
        format_version=FORMAT_VERSION,
        problem_name=problem.name,
        problem_params=dict(problem.params),
        shape=problem.shape,
        anchors=anchors,
        records=records,
        topology=topology,
        regions=regions,
        bounds=bounds,
        build=cfg,
    )


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return "%.17g" % float(v)


def _table_document(table: PrecomputedTable) -> dict:
    return {
        "format_version": table.format_version,
        "problem": {
            "name": table.problem_name,
            "params": {k: _fmt(v) for k, v in sorted(table.problem_params.items())},
        },
        "shape": {
            "fibre_dim": table.shape.fibre_dim,
            "base_dim": table.shape.base_dim,
        },
        "bounds": {
            "alpha": _fmt(table.bounds.alpha),
            "beta": _fmt(table.bounds.beta),
            "source": table.bounds.source,
        },
        "build": {
            "anchors_per_dim": table.build.anchors_per_dim,
            "fibre_grid_per_dim": table.build.fibre_grid_per_dim,
            "region_grid_per_dim": table.build.region_grid_per_dim,
            "tol": _fmt(table.build.tol),
            "value_tol": _fmt(table.build.value_tol),
            "seed": table.build.seed,
        },
        "anchors": [[_fmt(c) for c in a.coords] for a in table.anchors],
        "records": [
            {
                "anchor_index": r.anchor_index,
                "x": [_fmt(c) for c in r.x.coords],
                "index": r.index,
                "component_id": r.component_id,
                "f_value": _fmt(r.f_value),
                "hess_inv_norm": _fmt(r.hess_inv_norm),
            }
            for r in table.records
        ],
        "topology": {
            "num_components": table.topology.num_components,
            "components": [
                {
                    "component_id": c.component_id,
                    "intersections_per_fibre": c.intersections_per_fibre,
                    "is_min": c.is_min,
                    "morse_index": c.morse_index,
                }
                for c in table.topology.components
            ],
        },
        "regions": {
            "grid_per_dim": table.regions.grid_per_dim,
            "base_dim": table.regions.base_dim,
            "cells": [list(cell) for cell in table.regions.cells],
        },
    }


def _checksum(doc: dict) -> str:
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def save_table(table: PrecomputedTable, destination: str | Path) -> None:
    """Write the canonical table file (see module docstring for the format)."""
    doc = _table_document(table)
    envelope = {"checksum": _checksum(doc), "table": doc}
    text = json.dumps(envelope, sort_keys=True, indent=2) + "\n"
    Path(destination).write_text(text, encoding="utf-8")


def _parse_real(s, context: str) -> float:
    try:
        return float(s)
    except (TypeError, ValueError):
        raise CorruptTableError(f"unreadable real in {context}: {s!r}") from None


def load_table(source: str | Path) -> PrecomputedTable:
    """Read, checksum-verify, and revalidate a table file."""
    try:
        text = Path(source).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptTableError(f"table file is not UTF-8: {exc}") from None
    try:
        envelope = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptTableError(f"table file is not valid JSON: {exc}") from None
    if not isinstance(envelope, dict) or "table" not in envelope:
        raise CorruptTableError("table file has no 'table' object")
    doc = envelope["table"]
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"table format_version {version!r} not supported (expected {FORMAT_VERSION})"
        )
    if envelope.get("checksum") != _checksum(doc):
        raise CorruptTableError("table checksum mismatch")
    try:
        table = _table_from_document(doc)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptTableError(f"malformed table document: {exc!r}") from None
    _validate_loaded(table)
    return table


def _table_from_document(doc: dict) -> PrecomputedTable:
    shape = BundleShape(
        fibre_dim=int(doc["shape"]["fibre_dim"]),
        base_dim=int(doc["shape"]["base_dim"]),
    )
    bounds = DerivativeBounds(
        alpha=_parse_real(doc["bounds"]["alpha"], "bounds.alpha"),
        beta=_parse_real(doc["bounds"]["beta"], "bounds.beta"),
        source=str(doc["bounds"]["source"]),
    )
    build = BuildConfig(
        anchors_per_dim=int(doc["build"]["anchors_per_dim"]),
        fibre_grid_per_dim=int(doc["build"]["fibre_grid_per_dim"]),
        region_grid_per_dim=int(doc["build"]["region_grid_per_dim"]),
        tol=_parse_real(doc["build"]["tol"], "build.tol"),
        value_tol=_parse_real(doc["build"]["value_tol"], "build.value_tol"),
        seed=int(doc["build"]["seed"]),
    )
    anchors = tuple(
        AngleVec(tuple(_parse_real(c, "anchors") for c in a)) for a in doc["anchors"]
    )
    records = tuple(
        CriticalPointRecord(
            anchor_index=int(r["anchor_index"]),
            x=AngleVec(tuple(_parse_real(c, "records.x") for c in r["x"])),
            index=int(r["index"]),
            component_id=int(r["component_id"]),
            f_value=_parse_real(r["f_value"], "records.f_value"),
            hess_inv_norm=_parse_real(r["hess_inv_norm"], "records.hess_inv_norm"),
        )
        for r in doc["records"]
    )
    topology = TopologySummary(
        num_components=int(doc["topology"]["num_components"]),
        components=tuple(
            ComponentInfo(
                component_id=int(c["component_id"]),
                intersections_per_fibre=int(c["intersections_per_fibre"]),
                is_min=bool(c["is_min"]),
                morse_index=int(c["morse_index"]),
            )
            for c in doc["topology"]["components"]
        ),
    )
    regions = RegionMap(
        grid_per_dim=int(doc["regions"]["grid_per_dim"]),
        base_dim=int(doc["regions"]["base_dim"]),
        cells=tuple(tuple(int(i) for i in cell) for cell in doc["regions"]["cells"]),
    )
    return PrecomputedTable(
        format_version=int(doc["format_version"]),
        problem_name=str(doc["problem"]["name"]),
        problem_params={
            str(k): _parse_real(v, "problem.params")
            for k, v in doc["problem"]["params"].items()
        },
        shape=shape,
        anchors=anchors,
        records=records,
        topology=topology,
        regions=regions,
        bounds=bounds,
        build=build,
    )


def _validate_loaded(table: PrecomputedTable) -> None:
    n_anchors = len(table.anchors)
    if n_anchors != table.build.anchors_per_dim**table.shape.base_dim:
        raise CorruptTableError("anchor count does not match build config")
    if any(a.dim != table.shape.base_dim for a in table.anchors):
        raise CorruptTableError("anchor dimension mismatch")
    if n_anchors == 0 or len(table.records) == 0:
        raise CorruptTableError("table has no anchors or no records")
    if len(table.records) % n_anchors != 0:
        raise CorruptTableError("record count not divisible by anchor count")
    per_fibre = len(table.records) // n_anchors
    counts = [0] * n_anchors
    k = table.shape.fibre_dim
    n_comp = table.topology.num_components
    for r in table.records:
        if not (0 <= r.anchor_index < n_anchors):
            raise CorruptTableError(f"record anchor_index {r.anchor_index} out of range")
        counts[r.anchor_index] += 1
        if r.x.dim != k:
            raise CorruptTableError("record fibre dimension mismatch")
        if not (0 <= r.index <= k):
            raise CorruptTableError(f"record Morse index {r.index} out of range")
        if not (0 <= r.component_id < n_comp):
            raise CorruptTableError(f"record component_id {r.component_id} out of range")
        if not (math.isfinite(r.f_value) and r.hess_inv_norm > 0.0):
            raise CorruptTableError("record has non-finite value or bad Hessian norm")
    if set(counts) != {per_fibre}:
        raise CorruptTableError("per-anchor record counts are not constant")
    if table.topology.num_components != len(table.topology.components):
        raise CorruptTableError("topology component count mismatch")
    by_comp_index: dict[int, set[int]] = {}
    by_comp_count: dict[int, int] = {}
    for r in table.records:
        by_comp_index.setdefault(r.component_id, set()).add(r.index)
        if r.anchor_index == 0:
            by_comp_count[r.component_id] = by_comp_count.get(r.component_id, 0) + 1
    for c in table.topology.components:
        if c.component_id not in by_comp_index:
            raise CorruptTableError(f"component {c.component_id} has no records")
        if by_comp_index[c.component_id] != {c.morse_index}:
            raise CorruptTableError(
                f"component {c.component_id} records disagree with its Morse index"
            )
        if c.is_min != (c.morse_index == 0):
            raise CorruptTableError(f"component {c.component_id} is_min flag inconsistent")
        if by_comp_count.get(c.component_id) != c.intersections_per_fibre:
            raise CorruptTableError(
                f"component {c.component_id} fibre intersection count inconsistent"
            )
    if sum(c.intersections_per_fibre for c in table.topology.components) != per_fibre:
        raise CorruptTableError("component intersection counts do not sum to fibre count")
    min_ids = set(table.topology.min_component_ids)
    if len(table.regions.cells) != table.regions.grid_per_dim**table.regions.base_dim:
        raise CorruptTableError("region cell count mismatch")
    if table.regions.base_dim != table.shape.base_dim:
        raise CorruptTableError("region map dimension mismatch")
    for cell in table.regions.cells:
        if len(cell) == 0:
            raise CorruptTableError("region cell lists no components")
        if not set(cell) <= min_ids:
            raise CorruptTableError("region cell lists a non-minimum component")
    # For catalog problems the callbacks are reconstructible, so the stored
    # critical points can be revalidated against the actual gradient.
    entry = CATALOG.get(table.problem_name)
    if entry is not None:
        problem = entry.factory()
        if problem.shape != table.shape:
            raise CorruptTableError("table shape disagrees with catalog problem")
        grad_limit = DEDUP_FACTOR * max(table.build.tol, 1e-9)
        for r in table.records:
            theta = table.anchors[r.anchor_index]
            g = np.asarray(problem.fibre_grad(r.x.array, theta.array), dtype=float)
            if float(np.linalg.norm(g)) > grad_limit:
                raise CorruptTableError(
                    f"record at anchor {r.anchor_index}, x={r.x.coords} has gradient "
                    f"norm {float(np.linalg.norm(g)):.3e} above {grad_limit:.1e}"
                )
