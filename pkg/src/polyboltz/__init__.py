"""Numerics for the polyatomic Boltzmann collision operator with continuous internal energy."""

from .errors import AssumptionError, BasisError, ConfigError, DomainError, NumericalError, PolyBoltzError
from .quadrature import MCResult, QuadratureSpec

__version__ = "0.1.0"

__all__ = ["AssumptionError", "BasisError", "ConfigError", "DomainError", "NumericalError", "PolyBoltzError",
           "MCResult", "QuadratureSpec", "__version__"]
