"""Besov-type sequence spaces, almost diagonal operators and patchwise spline wavelets."""
__version__ = "0.1.0"
