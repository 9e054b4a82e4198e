"""Chart-local normal forms: deformation spaces, Euler-like fields, splittings."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
