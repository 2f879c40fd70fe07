"""Rendering for flowpoe figure bundles.

This package consumes the JSON bundle schema written by `flowpoe figures`
and draws it; it never recomputes statistics and has no dependency on the
models or samplers that produced the bundle.
"""

from .bundle import BundleError, FigureBundle, load_bundle
from .render import (expert_strip, quantile_fan, render_bundle, save_figure,
                     trajectories)

__all__ = ["BundleError", "FigureBundle", "load_bundle", "quantile_fan",
           "trajectories", "expert_strip", "save_figure", "render_bundle"]
