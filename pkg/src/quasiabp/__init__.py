"""Finite-difference toolkit for degenerate quasilinear elliptic equations in non-divergence form."""

__version__ = "0.1.0"
