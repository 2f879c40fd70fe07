"""Figure-bundle schema: parsing and validation, no drawing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BundleError", "FigureBundle", "load_bundle"]


class BundleError(ValueError):
    """The bundle violates the documented schema."""


def _array(obj, name: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise BundleError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != ndim:
        raise BundleError(f"{name} must be {ndim}-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise BundleError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class FigureBundle:
    """Validated contents of a bundle.json.

    quantiles has one row per level, each aligned with x; trajectories is
    (n_paths, len(x)) and may be empty (0, len(x)).  expert_logprob, when
    present, carries ("y_grid", "values", "r") with one values row per x.
    """

    x: np.ndarray
    quantile_levels: np.ndarray
    quantiles: np.ndarray
    trajectories: np.ndarray
    context_x: np.ndarray
    context_y: np.ndarray
    labels: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    expert_logprob: dict | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "FigureBundle":
        if not isinstance(raw, dict):
            raise BundleError("bundle must be a JSON object")
        if raw.get("kind") != "figure_bundle":
            raise BundleError(f"kind must be 'figure_bundle', got {raw.get('kind')!r}")
        for key in ("x", "quantile_levels", "quantiles", "context",
                    "trajectories"):
            if key not in raw:
                raise BundleError(f"bundle is missing {key!r}")

        x = _array(raw["x"], "x", 1)
        if x.size == 0:
            raise BundleError("x grid is empty")
        levels = _array(raw["quantile_levels"], "quantile_levels", 1)
        if levels.size == 0 or np.any(np.diff(levels) <= 0):
            raise BundleError("quantile_levels must be non-empty and increasing")
        if np.any(levels <= 0) or np.any(levels >= 1):
            raise BundleError("quantile_levels must lie in (0, 1)")

        quantiles = _array(raw["quantiles"], "quantiles", 2)
        if quantiles.shape != (levels.size, x.size):
            raise BundleError(
                f"quantiles shape {quantiles.shape} does not match "
                f"{levels.size} levels over {x.size} x points")

        traj_raw = raw["trajectories"]
        if len(traj_raw) == 0:
            trajectories = np.empty((0, x.size))
        else:
            trajectories = _array(traj_raw, "trajectories", 2)
            if trajectories.shape[1] != x.size:
                raise BundleError(
                    f"trajectories have {trajectories.shape[1]} points, "
                    f"x has {x.size}")

        ctx = raw["context"]
        if not isinstance(ctx, dict) or "x" not in ctx or "y" not in ctx:
            raise BundleError("context must carry 'x' and 'y'")
        context_x = _array(ctx["x"], "context.x", 1)
        context_y = _array(ctx["y"], "context.y", 1)
        if context_x.size != context_y.size:
            raise BundleError("context x and y lengths differ")

        expert = raw.get("expert_logprob")
        if expert is not None:
            if not isinstance(expert, dict):
                raise BundleError("expert_logprob must be an object")
            y_grid = _array(expert.get("y_grid"), "expert_logprob.y_grid", 1)
            values = _array(expert.get("values"), "expert_logprob.values", 2)
            if values.shape != (x.size, y_grid.size):
                raise BundleError(
                    f"expert values shape {values.shape} does not match "
                    f"{x.size} x points over a {y_grid.size}-point grid")
            expert = {"y_grid": y_grid, "values": values,
                      "r": float(expert.get("r", 0.0))}

        return cls(x=x, quantile_levels=levels, quantiles=quantiles,
                   trajectories=trajectories, context_x=context_x,
                   context_y=context_y, labels=dict(raw.get("labels", {})),
                   provenance=dict(raw.get("provenance", {})),
                   expert_logprob=expert)


def load_bundle(path) -> FigureBundle:
    """Read and validate a bundle.json."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path} is not valid JSON: {exc}") from None
    return FigureBundle.from_dict(raw)
