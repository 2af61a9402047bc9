"""Figure rendering for harness CSV outputs."""

from .render import PlotError, render

__all__ = ["PlotError", "render"]
