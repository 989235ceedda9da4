"""Batch rendering of galmix series files: decay curves with fit overlays,
return-time tails, sweep plots and moment traces.

Consumes only the delimited-text files documented in the simulator's
docs/schemas.md; never mutates its inputs.
"""

__version__ = "0.1.0"

from .series import SchemaError, SeriesFile, load_series
from .plots import render

__all__ = ["SchemaError", "SeriesFile", "load_series", "render"]
