"""Entropy-stable, positivity-preserving DGSEM for multicomponent compressible Euler flows."""

from . import dgsem, errors, exact_riemann, fluxes, fv, mesh, thermo, time

__all__ = ["dgsem", "errors", "exact_riemann", "fluxes", "fv", "mesh", "thermo", "time"]
__version__ = "0.1.0"
