"""Dyadic harmonic analysis over arbitrary finite-depth measures."""

__version__ = "0.1.0"
