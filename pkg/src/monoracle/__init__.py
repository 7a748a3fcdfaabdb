"""Kernel density estimation with cross-validated monotone spectral kernels."""

__version__ = "0.1.0"
