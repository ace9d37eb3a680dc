"""Blended force-based quasicontinuum (B-QCF) models on 1D chains and the
2D triangular lattice, with stability and accuracy benchmark drivers."""

__version__ = "0.1.0"
