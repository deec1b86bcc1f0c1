"""Calogero-Sutherland particles coupled to two interacting so(N) spins.

Library for the Hamiltonian dynamics, Lax pair, classical r-matrix and
conserved quantities of the model, plus numerical identity checks.
"""

from .phase_space import (
    OrbitSpec,
    SeparationError,
    State,
    canonical_so_matrix,
    random_state,
    validate_state,
)
from .brackets import Gradient, Observable, poisson, poisson_fd
from .dynamics import eom, eom_via_brackets, hamiltonian
from .lax import lax_L, lax_M, lax_residual
from .rmatrix import r12, r21, rmatrix_residual, m_from_r_residual
from .integrator import IntegratorConfig, Trajectory, integrate, drift_report

__version__ = "0.1.0"

__all__ = [
    "OrbitSpec",
    "SeparationError",
    "State",
    "canonical_so_matrix",
    "random_state",
    "validate_state",
    "Gradient",
    "Observable",
    "poisson",
    "poisson_fd",
    "eom",
    "eom_via_brackets",
    "hamiltonian",
    "lax_L",
    "lax_M",
    "lax_residual",
    "r12",
    "r21",
    "rmatrix_residual",
    "m_from_r_residual",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "drift_report",
]
