"""Pure drawing: FigureBundle in, matplotlib Figure / image files out."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bundle import BundleError, FigureBundle

__all__ = ["quantile_fan", "trajectories", "expert_strip", "save_figure",
           "render_bundle"]

_FIGSIZE = (6.0, 4.0)
_DPI = 120
# Fixed salt: matplotlib derives SVG element ids from it, so repeated renders
# of the same bundle are byte-identical.
_HASHSALT = "flowpoe-plots"


def _axes(bundle: FigureBundle):
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    labels = bundle.labels
    ax.set_title(labels.get("title", ""))
    ax.set_xlabel(labels.get("x", "x"))
    ax.set_ylabel(labels.get("y", "y"))
    return fig, ax


def _context_markers(ax, bundle: FigureBundle) -> None:
    if bundle.context_x.size:
        ax.plot(bundle.context_x, bundle.context_y, "o", color="black",
                markersize=6, zorder=5, label="context")


def _cover_extent(ax, xs: list[np.ndarray], ys: list[np.ndarray]) -> None:
    # Explicit limits so the drawn ranges provably cover every input array.
    x_all = np.concatenate([np.ravel(a) for a in xs if np.size(a)])
    y_all = np.concatenate([np.ravel(a) for a in ys if np.size(a)])
    for setter, vals in ((ax.set_xlim, x_all), (ax.set_ylim, y_all)):
        lo, hi = float(vals.min()), float(vals.max())
        pad = 0.05 * (hi - lo) or 0.5
        setter(lo - pad, hi + pad)


def quantile_fan(bundle: FigureBundle):
    """Nested shaded bands between consecutive quantile levels.

    len(levels) - 1 bands, deeper alpha toward the middle; a single-level
    bundle degenerates to a line.  Context points are drawn as-is.
    """
    fig, ax = _axes(bundle)
    q = bundle.quantiles
    n_levels = q.shape[0]
    mid = (n_levels - 1) / 2.0
    for i in range(n_levels - 1):
        # Band i sits between levels i and i+1; distance from the median
        # pair sets the shade.
        depth = 1.0 - abs(i + 0.5 - mid) / max(mid + 0.5, 1.0)
        ax.fill_between(bundle.x, q[i], q[i + 1], color="tab:blue",
                        alpha=0.15 + 0.35 * depth, linewidth=0)
    ax.plot(bundle.x, q[(n_levels - 1) // 2], color="tab:blue", linewidth=1.5)
    _context_markers(ax, bundle)
    _cover_extent(ax, [bundle.x, bundle.context_x], [q, bundle.context_y])
    return fig


def trajectories(bundle: FigureBundle):
    """Overlay of the bundle's sample paths with context markers."""
    if bundle.trajectories.shape[0] == 0:
        raise BundleError("bundle has no trajectories to draw")
    fig, ax = _axes(bundle)
    for row in bundle.trajectories:
        ax.plot(bundle.x, row, color="tab:orange", alpha=0.6, linewidth=1.0)
    _context_markers(ax, bundle)
    _cover_extent(ax, [bundle.x, bundle.context_x],
                  [bundle.trajectories, bundle.context_y])
    return fig


def expert_strip(bundle: FigureBundle):
    """Heat strip of per-target expert log-probabilities over the y grid."""
    if bundle.expert_logprob is None:
        raise BundleError("bundle has no expert_logprob block")
    fig, ax = _axes(bundle)
    e = bundle.expert_logprob
    mesh = ax.pcolormesh(bundle.x, e["y_grid"], e["values"].T,
                         cmap="viridis", shading="nearest")
    fig.colorbar(mesh, ax=ax, label="expert log-probability")
    _context_markers(ax, bundle)
    return fig


def save_figure(fig, path) -> Path:
    """Write png or svg with run-stable bytes (no timestamps, fixed ids)."""
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower()
    if fmt not in ("png", "svg"):
        raise BundleError(f"unsupported format {fmt!r} (png or svg)")
    metadata = {"Date": None} if fmt == "svg" else {"Software": None}
    with matplotlib.rc_context({"svg.hashsalt": _HASHSALT}):
        fig.savefig(path, format=fmt, metadata=metadata)
    return path


def render_bundle(bundle: FigureBundle, out_dir,
                  formats: tuple[str, ...] = ("png", "svg")) -> list[Path]:
    """Draw every figure the bundle supports; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = [("fan", quantile_fan(bundle))]
    if bundle.trajectories.shape[0]:
        figures.append(("trajectories", trajectories(bundle)))
    if bundle.expert_logprob is not None:
        figures.append(("experts", expert_strip(bundle)))
    written = []
    try:
        for name, fig in figures:
            for fmt in formats:
                written.append(save_figure(fig, out_dir / f"{name}.{fmt}"))
    finally:
        for _, fig in figures:
            plt.close(fig)
    return written
