"""Numerical shape calculus for the clamped-plate buckling eigenvalue in 2D."""

__version__ = "0.1.0"
