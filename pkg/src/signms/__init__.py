"""Two-scale solver for Helmholtz-like problems with sign-changing coefficients."""

from . import app, assembly, auxspace, coarse, coeffs, mesh, msbasis
from .errors import (
    ConfigurationError,
    GenerationError,
    IngestionError,
    NumericalError,
    SignmsError,
    SolverError,
)

__all__ = [
    "app",
    "assembly",
    "auxspace",
    "coarse",
    "coeffs",
    "mesh",
    "msbasis",
    "ConfigurationError",
    "GenerationError",
    "IngestionError",
    "NumericalError",
    "SignmsError",
    "SolverError",
]

__version__ = "0.1.0"
