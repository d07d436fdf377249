"""Clickstream encoding, behavioral actions and the Information Processing Index."""

from ._jit import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
