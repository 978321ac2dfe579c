"""Branching processes with emigration: colony partitions, their scaling
limits, and Monte Carlo verification of the limit theory."""

from .kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
