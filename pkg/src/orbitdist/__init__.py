"""Permutation-infimum distances between orbit segments of dynamical systems."""
__version__ = "0.1.0"
