"""Figures from roughplane CLI artifacts."""

from .render import RENDERERS, FigureJob, render
from .schemas import SchemaMismatch

__version__ = "0.1.0"
