"""Numerical Berry-Esseen machinery for quantum lattice systems."""

__version__ = "0.1.0"
