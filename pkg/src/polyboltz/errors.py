"""Exception hierarchy shared by all modules."""


class PolyBoltzError(Exception):
    """Base class for library errors."""


class DomainError(PolyBoltzError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(PolyBoltzError, ValueError):
    """Invalid or non-deterministic configuration."""


class NumericalError(PolyBoltzError, ArithmeticError):
    """A quadrature or eigensolve produced unusable numbers."""


class AssumptionError(PolyBoltzError):
    """A cross-section model violates a hypothesis required by an operation."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class BasisError(PolyBoltzError):
    """Galerkin basis is not orthonormal or too small for the requested check."""
