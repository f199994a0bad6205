"""Sparse spectral estimation of 2D damped complex exponentials."""

__version__ = "0.1.0"
