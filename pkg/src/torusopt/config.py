"""Run configuration: one JSON file plus flag overrides, flags winning.

A config file is a single JSON object whose keys are exactly the RunConfig
field names; unknown keys are rejected so typos fail loudly instead of
silently falling back to defaults. All randomness in a run flows from the
single seed recorded here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import InvalidConfigError
from .tables import BuildConfig

__all__ = ["RunConfig", "load_run_config", "apply_overrides", "to_build_config"]

QUERY_MODES = ("track-all-minima", "region-guided")

_INT_FIELDS = {"anchors_per_dim", "fibre_grid_per_dim", "region_grid_per_dim", "seed"}
_FLOAT_FIELDS = {"tol", "value_tol"}
_STR_FIELDS = {"problem", "mode", "table_in", "table_out"}


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run needs: problem, grids, tolerances, seed, paths."""

    problem: str | None = None
    anchors_per_dim: int = 16
    fibre_grid_per_dim: int = 64
    region_grid_per_dim: int = 64
    tol: float = 1e-9
    value_tol: float = 1e-7
    seed: int = 0
    mode: str = "track-all-minima"
    table_in: str | None = None
    table_out: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in QUERY_MODES:
            raise InvalidConfigError(
                f"mode must be one of {QUERY_MODES}, got {self.mode!r}"
            )
        # Grid and tolerance ranges are enforced by BuildConfig.
        to_build_config(self)


def to_build_config(cfg: RunConfig) -> BuildConfig:
    return BuildConfig(
        anchors_per_dim=cfg.anchors_per_dim,
        fibre_grid_per_dim=cfg.fibre_grid_per_dim,
        region_grid_per_dim=cfg.region_grid_per_dim,
        tol=cfg.tol,
        value_tol=cfg.value_tol,
        seed=cfg.seed,
    )


def load_run_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON config file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidConfigError("config file must hold a single JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")
    values: dict[str, object] = {}
    for key, value in raw.items():
        if key in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidConfigError(f"config key {key!r} must be an integer")
            values[key] = value
        elif key in _FLOAT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidConfigError(f"config key {key!r} must be a number")
            values[key] = float(value)
        elif key in _STR_FIELDS:
            if value is not None and not isinstance(value, str):
                raise InvalidConfigError(f"config key {key!r} must be a string")
            values[key] = value
    return RunConfig(**values)


def apply_overrides(cfg: RunConfig, **overrides: object) -> RunConfig:
    """Return cfg with every non-None override applied (flags beat the file)."""
    effective = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **effective) if effective else cfg
