"""Stability of classical and quantum motion: numerics, variational checks and scale laws."""

__version__ = "0.1.0"
