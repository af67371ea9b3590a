"""Figures from sns run artifacts: log-log convergence plots with fitted
slopes and reference-order guides, charge-decay envelopes, and
exponential-moment time series."""

__version__ = "0.1.0"

from .render import FigureJob, build_figure, render

__all__ = ["FigureJob", "build_figure", "render", "__version__"]
