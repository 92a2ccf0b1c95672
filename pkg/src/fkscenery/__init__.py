"""Feynman-Kac Monte Carlo and quadrature for random-scenery homogenization."""

__version__ = "0.1.0"
