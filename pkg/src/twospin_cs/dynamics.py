"""Hamiltonian, explicit equations of motion and their bracket-based twin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brackets import Observable, poisson_tensor
from .phase_space import SEP_MIN, SeparationError, State, upper_of


@dataclass(frozen=True)
class PairTable:
    """Hyperbolic functions of all differences ``u_i - u_j``.

    Every table is a full N x N matrix with zero diagonal, so sums over
    ``k != i`` become plain matrix products.
    """

    sinh: np.ndarray
    cosh: np.ndarray
    coth: np.ndarray
    inv_sinh: np.ndarray  # 1/sinh
    inv_sinh2: np.ndarray  # 1/sinh^2
    cosh_sinh2: np.ndarray  # cosh/sinh^2
    cosh_sinh3: np.ndarray  # cosh/sinh^3
    inv_sinh3: np.ndarray  # 1/sinh^3

    @classmethod
    def build(cls, u: np.ndarray, sep_min: float = SEP_MIN) -> "PairTable":
        n = u.shape[0]
        d = u[:, None] - u[None, :]
        off = ~np.eye(n, dtype=bool)
        gap = np.abs(d[off]).min()
        if not gap >= sep_min:
            raise SeparationError(f"minimum particle separation {gap:.3e} below {sep_min:.1e}")
        d = np.where(off, d, 1.0)
        sh, ch = np.sinh(d), np.cosh(d)
        zero = np.where(off, 1.0, 0.0)
        ish = zero / sh
        ish2 = ish * ish
        return cls(
            sinh=sh * zero,
            cosh=ch * zero,
            coth=ch * ish,
            inv_sinh=ish,
            inv_sinh2=ish2,
            cosh_sinh2=ch * ish2,
            cosh_sinh3=ch * ish2 * ish,
            inv_sinh3=ish2 * ish,
        )


def pair_table(s: State) -> PairTable:
    if "pairs" not in s._cache:
        s._cache["pairs"] = PairTable.build(s.u)
    return s._cache["pairs"]


@dataclass(frozen=True)
class StateDerivative:
    """Time derivatives of the State fields; ``dS`` and ``dT`` are full matrices."""

    du: np.ndarray
    dv: np.ndarray
    dS: np.ndarray
    dT: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.du, self.dv, upper_of(self.dS), upper_of(self.dT)])

    @classmethod
    def from_vector(cls, n: int, x) -> "StateDerivative":
        ds = State.from_vector(n, x)
        return cls(ds.u.copy(), ds.v.copy(), ds.S, ds.T)


def hamiltonian(s: State) -> float:
    P = pair_table(s)
    S, T = s.S, s.T
    pot = (S * S + T * T) * P.inv_sinh2 - 2.0 * S * T * P.cosh_sinh2
    # full matrix counts each pair twice
    return float(0.5 * s.v @ s.v + 0.5 * pot.sum())


def hamiltonian_gradient(s: State) -> np.ndarray:
    """Flat analytic gradient of H in the (u, v, S_upper, T_upper) layout."""
    P = pair_table(s)
    S, T = s.S, s.T
    # d/du_ik of (A - 2B cosh)/sinh^2 is (-2A cosh + 2B(cosh^2 + 1))/sinh^3
    A = S * S + T * T
    B = S * T
    dpair = -2.0 * A * P.cosh_sinh3 + 2.0 * B * (P.cosh * P.cosh + 1.0) * P.inv_sinh3
    d_u = dpair.sum(axis=1)
    d_S = upper_of(2.0 * S * P.inv_sinh2 - 2.0 * T * P.cosh_sinh2)
    d_T = upper_of(2.0 * T * P.inv_sinh2 - 2.0 * S * P.cosh_sinh2)
    return np.concatenate([d_u, s.v, d_S, d_T])


def hamiltonian_observable() -> Observable:
    return Observable(hamiltonian, hamiltonian_gradient, "H")


def eom(s: State) -> StateDerivative:
    """Explicit equations of motion, written out term by term."""
    P = pair_table(s)
    S, T = s.S, s.T
    dv = (
        2.0 * P.cosh_sinh3 * (S * S + T * T)
        - 2.0 * (P.cosh * P.cosh + 1.0) * P.inv_sinh3 * S * T
    ).sum(axis=1)
    Q = P.inv_sinh2
    C = P.cosh_sinh2
    # sum_k T_ik T_kj (Q_kj - Q_ik) - T_ik S_kj C_kj + S_ik T_kj C_ik
    # each bracket below is X - X^T, so antisymmetry is exact in floating point
    Z = T @ (T * Q) - T @ (S * C)
    dT = Z - Z.T
    # sum_k S_ik S_kj (Q_ik - Q_kj) + S_ik T_kj C_kj - T_ik S_kj C_ik
    Y = (S * Q) @ S + S @ (T * C)
    dS = Y - Y.T
    return StateDerivative(s.v.copy(), dv, dS, dT)


def eom_via_brackets(s: State) -> StateDerivative:
    """Every coordinate's derivative as ``{H, x_a}`` through the bracket engine."""
    xdot = hamiltonian_gradient(s) @ poisson_tensor(s)
    return StateDerivative.from_vector(s.n, xdot)


def eom_vector(n: int, x: np.ndarray) -> np.ndarray:
    return eom(State.from_vector(n, x)).to_vector()


def bc1_hamiltonian(q, p, m1, m2):
    """One-degree-of-freedom BC1 Hamiltonian with couplings m1, m2."""
    return 0.5 * p * p + (m1 * m1 + m2 * m2 - 2.0 * m1 * m2 * np.cosh(2 * q)) / np.sinh(2 * q) ** 2


def bc1_reduction(s: State) -> tuple[float, float, float, float, float]:
    """Map a two-particle State to ``(q, p, m1, m2, P)``.

    ``q = (u1 - u2)/2``, ``p = (v1 - v2)/sqrt(2)``, ``m1 = S12``, ``m2 = T12``
    and ``P = v1 + v2``, chosen so that ``H = P^2/4 + bc1_hamiltonian(q, p, m1, m2)``.
    """
    if s.n != 2:
        raise ValueError("BC1 reduction needs exactly two particles")
    q = 0.5 * (s.u[0] - s.u[1])
    p = (s.v[0] - s.v[1]) / np.sqrt(2.0)
    return float(q), float(p), float(s.S_upper[0]), float(s.T_upper[0]), float(s.v.sum())
