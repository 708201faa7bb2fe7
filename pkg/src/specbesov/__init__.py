"""Spectral Besov calculus for periodic divergence-form operators and singular SPDE prototypes."""

__version__ = "0.1.0"
