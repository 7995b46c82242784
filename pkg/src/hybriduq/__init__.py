"""Hybrid information-divergence bounds for a random 1D elliptic flow problem."""

__version__ = "0.1.0"
