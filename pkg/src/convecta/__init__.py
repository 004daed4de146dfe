"""Numerical laboratory for the 2-D stochastic convected wave equation."""

__version__ = "0.1.0"
