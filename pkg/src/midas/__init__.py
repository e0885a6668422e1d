"""Mechanics-informed autoencoder pipeline for strain-based damage detection."""
from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
