"""Numerical toolkit for dynamical Markov/Lagrange spectra of horseshoes."""

__version__ = "0.1.0"
SCHEMA = "spectra-lab/1"
