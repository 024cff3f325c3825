"""Exception types shared across the solver modules."""


class SignmsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SignmsError):
    """Invalid user-facing configuration (mesh sizes, coefficients, config files)."""


class IngestionError(SignmsError):
    """A field/source file could not be parsed or violates an invariant."""


class GenerationError(SignmsError):
    """A random coefficient layout could not be generated under its constraints."""


class NumericalError(SignmsError):
    """An eigensolve or factorization failed for numerical reasons."""


class SolverError(SignmsError):
    """A linear solve failed or did not meet its residual requirement."""
