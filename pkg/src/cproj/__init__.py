"""Numerical verification toolkit for c-projective structures on Kähler surfaces."""

__version__ = "0.1.0"
