"""Interpolated optimized finite differences for the Helmholtz equation."""

__version__ = "0.1.0"
