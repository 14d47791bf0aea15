"""Matched-asymptotic blow-up profiles and flow integration for the
1-equivariant Schrodinger map flow into the sphere."""

from .errors import BlowupLabError, ConfigError, SolverError
from .geometry import BlowupParams, RadialField, RadialGrid, SphereField, degree, energy

__version__ = "0.1.0"

__all__ = ["BlowupLabError", "ConfigError", "SolverError", "BlowupParams", "RadialField",
           "RadialGrid", "SphereField", "degree", "energy", "__version__"]
