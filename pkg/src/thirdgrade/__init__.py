"""Spectral stochastic Galerkin simulator for the 2D third-grade fluid with Navier slip."""

__version__ = "0.1.0"
