"""Gaussian branching random walks on Galton-Watson trees, with CREM and dyadic-cascade variants."""

__version__ = "0.1.0"
