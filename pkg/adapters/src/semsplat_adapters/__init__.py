"""Adapters exporting 2D encoder outputs into the splat toolkit's formats."""

from .backends import ClipEncoder, ColorStatsEncoder, make_backend
from .errors import AdapterError
from .jobs import AdapterJob, export_features

__all__ = ["AdapterError", "AdapterJob", "ClipEncoder", "ColorStatsEncoder",
           "export_features", "make_backend"]

__version__ = "0.1.0"
