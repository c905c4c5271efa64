"""Harmonic-balance bifurcation analysis of periodic orbits in delay differential equations."""

__version__ = "0.1.0"
