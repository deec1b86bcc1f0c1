"""Lax pair, spectral invariants and integral counting.

The Lax matrix is used in the form

    L(z) = eta_tilde - (1 + coth z) T,

so most routines take ``w = coth z`` directly (``lax_L_w``); ``lax_L``
converts from the spectral parameter and guards its poles.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .brackets import poisson_tensor, poisson_terms_scale
from .dynamics import StateDerivative, eom, pair_table
from .phase_space import State, n_pairs, phase_dim

POLE_EPS = 1e-12
RANK_RTOL = 1e-8


class PoleError(ValueError):
    """Spectral parameter (or chart coordinate) sits on a pole."""


def coth(z):
    sh = np.sinh(z)
    if abs(sh) < POLE_EPS:
        raise PoleError(f"coth pole at z={z}")
    return np.cosh(z) / sh


def eta_tilde(s: State) -> np.ndarray:
    """``diag(v)`` plus off-diagonal ``(S_ij - T_ij exp(-u_ij)) / sinh(u_ij)``."""
    P = pair_table(s)
    d = s.u[:, None] - s.u[None, :]
    off = s.S * P.inv_sinh - s.T * np.exp(-d) * P.inv_sinh
    return np.diag(s.v) + off


def lax_L_w(s: State, w) -> np.ndarray:
    """Lax matrix at ``w = coth z``."""
    P = pair_table(s)
    L = s.S * P.inv_sinh - (P.coth + w) * s.T
    np.fill_diagonal(L, s.v)
    return L


def lax_L(s: State, z) -> np.ndarray:
    return lax_L_w(s, coth(z))


def lax_M(s: State) -> np.ndarray:
    P = pair_table(s)
    return s.T * P.inv_sinh2 - s.S * P.cosh_sinh2


@dataclass(frozen=True)
class LaxEval:
    z: complex
    L: np.ndarray
    M: np.ndarray
    eta_tilde: np.ndarray


def lax_pair(s: State, z) -> LaxEval:
    return LaxEval(z, lax_L(s, z), lax_M(s), eta_tilde(s))


def lax_L_dot(s: State, z, deriv: StateDerivative | None = None) -> np.ndarray:
    """Time derivative of L(z) by the chain rule through the equations of motion."""
    w = coth(z)
    if deriv is None:
        deriv = eom(s)
    P = pair_table(s)
    du = deriv.du[:, None] - deriv.du[None, :]
    # d(1/sinh)/du = -cosh/sinh^2, d(coth)/du = -1/sinh^2
    Ld = (
        deriv.dS * P.inv_sinh
        - s.S * P.cosh_sinh2 * du
        + s.T * P.inv_sinh2 * du
        - (P.coth + w) * deriv.dT
    )
    np.fill_diagonal(Ld, deriv.dv)
    return Ld


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def lax_residual(s: State, z) -> float:
    """Max-norm of ``dL/dt - [L, M]``."""
    L = lax_L(s, z)
    M = lax_M(s)
    return float(np.abs(lax_L_dot(s, z) - commutator(L, M)).max())


# gradients of Lax entries -------------------------------------------------


@lru_cache(maxsize=None)
def _slot_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Pair slot and orientation sign for every off-diagonal (a, b)."""
    slot = np.zeros((n, n), dtype=int)
    sign = np.zeros((n, n))
    p = 0
    for i in range(n):
        for j in range(i + 1, n):
            slot[i, j] = slot[j, i] = p
            sign[i, j], sign[j, i] = 1.0, -1.0
            p += 1
    return slot, sign


def lax_L_gradient(s: State, w) -> np.ndarray:
    """``G[a, b, :]`` is the flat phase-space gradient of ``L_ab`` at ``w``."""
    n, m = s.n, n_pairs(s.n)
    P = pair_table(s)
    dtype = np.result_type(float, w)
    G = np.zeros((n, n, phase_dim(n)), dtype=dtype)
    slot, sign = _slot_tables(n)
    a, b = np.nonzero(~np.eye(n, dtype=bool))
    d_ua = -s.S[a, b] * P.cosh_sinh2[a, b] + s.T[a, b] * P.inv_sinh2[a, b]
    G[a, b, a] += d_ua
    G[a, b, b] -= d_ua
    G[a, b, 2 * n + slot[a, b]] = sign[a, b] * P.inv_sinh[a, b]
    G[a, b, 2 * n + m + slot[a, b]] = -sign[a, b] * (P.coth[a, b] + w)
    idx = np.arange(n)
    G[idx, idx, n + idx] = 1.0
    return G


def trace_power_gradient(L: np.ndarray, G: np.ndarray, k: int) -> np.ndarray:
    """Gradient of ``tr L^k`` given the entry gradients ``G`` of ``L``."""
    P = np.linalg.matrix_power(L, k - 1)
    return k * np.einsum("ba,abd->d", P, G)


def _real_if_real(x, z):
    return np.real(x) if np.isrealobj(z) else x


def spectral_invariants(s: State, z, k_max: int) -> np.ndarray:
    """``tr L(z)^k`` for k = 2..k_max."""
    if not 2 <= k_max <= s.n:
        raise ValueError(f"k_max must lie in [2, {s.n}]")
    L = lax_L(s, z)
    out, P = [], L.copy()
    for _ in range(2, k_max + 1):
        P = P @ L
        out.append(np.trace(P))
    return _real_if_real(np.array(out), z)


def trace_bracket(s: State, z, k: int, w, m: int) -> tuple[float, float]:
    """``{tr L(z)^k, tr L(w)^m}`` and the absolute-term scale of that sum."""
    Lz, Lw = lax_L(s, z), lax_L(s, w)
    gF = trace_power_gradient(Lz, lax_L_gradient(s, coth(z)), k)
    gG = trace_power_gradient(Lw, lax_L_gradient(s, coth(w)), m)
    J = poisson_tensor(s)
    return complex(gF @ J @ gG), poisson_terms_scale(gF, gG, J)


# polynomial family in w = coth z ------------------------------------------


def expansion_nodes(l: int) -> np.ndarray:
    nodes = np.arange(l + 1) - l / 2.0
    if np.any(nodes == -1.0):
        nodes = nodes + 0.5
    return nodes


def expansion_invariants(s: State, l: int) -> np.ndarray:
    """Coefficients ``c_0..c_l`` of ``w -> tr((eta_tilde - (1 + w) T)^l)``."""
    if not 2 <= l <= s.n:
        raise ValueError(f"l must lie in [2, {s.n}]")
    nodes = expansion_nodes(l)
    vals = [np.trace(np.linalg.matrix_power(lax_L_w(s, w), l)) for w in nodes]
    V = np.vander(nodes, increasing=True)
    return np.linalg.solve(V, np.array(vals))


def expansion_invariant_gradients(s: State, l: int, with_scale: bool = False):
    """Rows are the phase-space gradients of ``c_0..c_l``.

    With ``with_scale`` also return the largest node-gradient norm, the
    magnitude against which rounding in the rows should be judged.
    """
    nodes = expansion_nodes(l)
    rows = np.array(
        [trace_power_gradient(lax_L_w(s, w), lax_L_gradient(s, w), l) for w in nodes]
    )
    V = np.vander(nodes, increasing=True)
    grads = np.linalg.solve(V, rows)
    if with_scale:
        return grads, float(np.linalg.norm(rows, axis=1).max())
    return grads


def paper_Ilk(s: State, l: int, k: int) -> float:
    """``tr(T^(l-k) eta_tilde^k)`` in that literal word order."""
    if not (2 <= l <= s.n and 0 <= k <= l):
        raise ValueError("need 2 <= l <= N and 0 <= k <= l")
    if k == 0:
        # T^l has transpose parity (-1)^l; imposing it makes odd l vanish bit-exactly
        X = np.linalg.matrix_power(s.T, l)
        return float(np.trace(0.5 * (X + (-1) ** l * X.T)))
    return float(
        np.trace(
            np.linalg.matrix_power(s.T, l - k) @ np.linalg.matrix_power(eta_tilde(s), k)
        )
    )


# chart form ----------------------------------------------------------------


def chart_X(s: State, spin_scale: float = 1.0) -> np.ndarray:
    """``X_jk = (S_jk - T_jk exp(-u_jk)) / (2 sinh u_jk)`` with spins scaled."""
    P = pair_table(s)
    d = s.u[:, None] - s.u[None, :]
    return spin_scale * (s.S - s.T * np.exp(-d)) * P.inv_sinh / 2.0


def chart_L1(s: State, z1, spin_scale: float = 2.0) -> np.ndarray:
    """``L1(z1) = T/z1 + (T + eta)/(1 - z1)`` with ``eta = diag(v) + X``.

    ``spin_scale`` multiplies the spins entering ``eta``; the value 2 is the
    rescale that makes ``eta`` coincide with ``eta_tilde``.
    """
    if abs(z1) < POLE_EPS or abs(1 - z1) < POLE_EPS:
        raise PoleError(f"chart pole at z1={z1}")
    eta = np.diag(s.v) + chart_X(s, spin_scale)
    return s.T / z1 + (s.T + eta) / (1 - z1)


def chart_relation_residual(s: State, z1, rescale: bool = True) -> float:
    """Max-norm of ``L(z) - (1 - z1) L1(z1)`` at ``coth z = -(1 + z1)/z1``."""
    L1 = chart_L1(s, z1, 2.0 if rescale else 1.0)
    w = -(1 + z1) / z1
    return float(np.abs(lax_L_w(s, w) - (1 - z1) * L1).max())


# counting ------------------------------------------------------------------


def integral_count_formula(n: int) -> tuple[int, int]:
    """``(N_G, N_G')``: the integral count before and after the so(N) correction."""
    n_g = sum(l + 1 for l in range(2, n + 1)) - (n - 1)
    assert 2 * n_g == (n - 1) * (n + 2)
    return n_g, n_g - n // 2


def family_rank_prediction(n: int) -> int:
    """Rank expected for the coefficient family c_k of tr L^l, l = 2..N.

    For so(N) spins ``L(w)^T = L(-w)``, so each ``tr L^l`` is even in ``w``
    and only the even coefficients ``c_0, c_2, ...`` survive.
    """
    return sum(l // 2 + 1 for l in range(2, n + 1))


@dataclass(frozen=True)
class IntegralCount:
    n: int
    n_functions: int  # coefficients c_k of tr L^l, l = 2..N
    N_G: int
    N_G_prime: int
    casimir_levels: int  # independent Casimirs tr T^(2m) among the functions
    formula_rank: int  # N_G' + casimir_levels
    family_prediction: int  # even-coefficient count, see family_rank_prediction
    rank: int
    rank_with_momentum: int  # family plus total momentum sum(v)
    leaf_half_dimension: int  # half the dimension of a symplectic leaf
    singular_values: tuple

    @property
    def consistent(self) -> bool:
        """Measured rank agrees with the even-coefficient prediction."""
        return self.rank == self.family_prediction

    @property
    def shortfall(self) -> int:
        """Independent non-Casimir integrals missing for Liouville counting."""
        return self.leaf_half_dimension - (self.rank_with_momentum - self.casimir_levels)


def _numerical_rank(rows: np.ndarray, scales: np.ndarray) -> tuple[int, np.ndarray]:
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > RANK_RTOL * scales
    rows = rows[keep] / norms[keep, None]
    if rows.size == 0:
        return 0, np.array([])
    sv = np.linalg.svd(rows, compute_uv=False)
    return int(np.sum(sv > RANK_RTOL * sv[0])), sv


def independent_integral_rank(s: State) -> IntegralCount:
    """Numerical rank of the gradients of the whole invariant family.

    Rows are normalized before the SVD so the growth of ``tr L^l`` with
    ``l`` does not hide small directions. Functions that vanish identically
    (odd ``tr T^l``, for instance) leave rows at rounding level; rows below
    ``RANK_RTOL`` times the gradient scale of their ``l`` are dropped.
    """
    n = s.n
    blocks, scales = [], []
    for l in range(2, n + 1):
        g, sc = expansion_invariant_gradients(s, l, with_scale=True)
        blocks.append(g)
        scales += [sc] * g.shape[0]
    rows = np.vstack(blocks)
    scales = np.array(scales)
    rank, sv = _numerical_rank(rows, scales)
    p = np.zeros(phase_dim(n))
    p[n:2 * n] = 1.0
    rank_p, _ = _numerical_rank(np.vstack([rows, p]), np.append(scales, 1.0))
    n_g, n_gp = integral_count_formula(n)
    leaf_dim = phase_dim(n) - 2 * (n // 2)
    return IntegralCount(
        n=n,
        n_functions=rows.shape[0],
        N_G=n_g,
        N_G_prime=n_gp,
        casimir_levels=n // 2,
        formula_rank=n_gp + n // 2,
        family_prediction=family_rank_prediction(n),
        rank=rank,
        rank_with_momentum=rank_p,
        leaf_half_dimension=leaf_dim // 2,
        singular_values=tuple(float(x) for x in sv),
    )
