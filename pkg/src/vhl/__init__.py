"""Numerical laboratory for a nonlocal operator with a boundary-vanishing horizon."""
from .geometry import Ball, HalfSpace, Interval, KernelParams

__all__ = ["Ball", "HalfSpace", "Interval", "KernelParams"]
__version__ = "0.1.0"
