"""Geometry, grids, potentials, moduli and the ODE integrator shared by all modules."""

from .domain import ConvexDomain, DomainError, diameter, parse_domain
from .grid import DegenerateGridError, Grid, GridFunction
from .modulus import ModulusFn, ModulusRangeError
from .potential import (
    DoubleWellPotential,
    ExpressionPotential,
    Potential,
    PotentialError,
    QuadraticPotential,
    RadialPlusTransversePotential,
    ZeroPotential,
    parse_potential,
    potential_from_text,
    require_even,
)

__all__ = [
    "ConvexDomain", "DomainError", "diameter", "parse_domain", "Grid", "GridFunction",
    "DegenerateGridError", "ModulusFn", "ModulusRangeError", "Potential", "PotentialError",
    "ExpressionPotential", "ZeroPotential", "QuadraticPotential", "DoubleWellPotential",
    "RadialPlusTransversePotential", "parse_potential", "potential_from_text", "require_even",
]
