"""Numerical models of self-adjoint extensions of strictly positive
symmetric operators with finite deficiency indices."""

__version__ = "0.1.0"
