"""Numerical verification toolkit for divergence-form Schrodinger operators
with possibly negative potentials: p-ellipticity constants, Bellman-function
convexity certificates, subcritical potential solvers, semigroup and
heat-flow checks, and a scenario-driven CLI."""

__version__ = "0.1.0"

from .bellman import BellmanParams
from .ellipticity import MatrixField, delta_p, exponent_window, is_perturbed_p_elliptic, sector_angle
from .operators import BoundaryCondition, Grid, assemble
from .potentials import Potential

__all__ = [
    "BellmanParams",
    "BoundaryCondition",
    "Grid",
    "MatrixField",
    "Potential",
    "assemble",
    "delta_p",
    "exponent_window",
    "is_perturbed_p_elliptic",
    "sector_angle",
    "__version__",
]
