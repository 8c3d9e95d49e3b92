"""Locally conserved integrals, Poisson brackets and Noether symmetry groups
for three integrable model systems."""

from .core import (
    DiffScheme,
    ScalarField,
    State,
    SymmetryField,
    SystemDef,
    commutator,
    euler_lagrange_residual,
    gauge_extend,
    integral_from_symmetry,
    poisson_bracket,
    symmetry_action,
    symmetry_from_integral,
)
from .odeint import EventSpec, Trajectory, integrate

__version__ = "0.1.0"

__all__ = [
    "DiffScheme",
    "ScalarField",
    "State",
    "SymmetryField",
    "SystemDef",
    "commutator",
    "euler_lagrange_residual",
    "gauge_extend",
    "integral_from_symmetry",
    "poisson_bracket",
    "symmetry_action",
    "symmetry_from_integral",
    "EventSpec",
    "Trajectory",
    "integrate",
]
