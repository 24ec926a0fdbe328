"""Invertible consistency distillation on a toy 2-D Gaussian mixture."""

__version__ = "0.1.0"
