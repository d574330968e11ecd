"""Frölicher spectral sequence, deformed differentials and strongly Gauduchon metrics
on finite-dimensional bicomplex models of compact complex manifolds."""

__version__ = "0.1.0"
