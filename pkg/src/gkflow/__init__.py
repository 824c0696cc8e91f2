"""Numerical toolkit for generalized complex and generalized Kaehler geometry on charts."""

__version__ = "0.1.0"
