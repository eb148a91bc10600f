"""Numerical microlocal analysis for families of smooth functions indexed by a small parameter."""
__version__ = "0.1.0"
