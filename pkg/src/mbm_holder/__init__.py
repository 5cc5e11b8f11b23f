"""Pointwise Hoelder exponent estimation for hidden multifractional Brownian motion."""
from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
