"""bolab: desk-scale spectral laboratory for a nonlocal dispersive hierarchy."""

from . import conserved, explicit, flows, lax, spectral

__all__ = ["spectral", "lax", "conserved", "flows", "explicit"]
__version__ = "0.1.0"
