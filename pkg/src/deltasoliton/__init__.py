"""Numerical construction and verification of multi-solitons for the 1-D
nonlinear Schroedinger equation with a repulsive delta potential."""

__version__ = "0.1.0"
