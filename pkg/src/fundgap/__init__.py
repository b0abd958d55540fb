"""Numerical tools for the fundamental gap of Schroedinger operators on convex domains.

Submodules: ``sturm1d`` (one-dimensional comparison problems), ``schrod_nd``
(Dirichlet eigenpairs in n dimensions), ``moduli`` (pairwise modulus checks),
``parabolic`` (heat flows and the psi evolution) and ``cli``.
"""

from .core import ConvexDomain, ModulusFn, parse_domain, potential_from_text
from .schrod_nd import fundamental_gap
from .sturm1d import gap1d

__version__ = "0.1.0"

__all__ = ["ConvexDomain", "ModulusFn", "parse_domain", "potential_from_text",
           "fundamental_gap", "gap1d", "__version__"]
