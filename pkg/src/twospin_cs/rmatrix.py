"""Classical r-matrix on Mat(N) (x) Mat(N).

Tensor convention: ``X[a*N + c, b*N + d]`` is the coefficient of
``E_ab (x) E_cd``, i.e. ``np.kron(A, B)[a*N + c, b*N + d] = A[a, b] B[c, d]``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .brackets import poisson_tensor
from .dynamics import pair_table
from .lax import POLE_EPS, PoleError, coth, lax_L, lax_L_gradient, lax_M
from .phase_space import State


def _guarded_coth(x, what: str):
    if abs(np.sinh(x)) < POLE_EPS:
        raise PoleError(f"{what} too close to a coth pole")
    return np.cosh(x) / np.sinh(x)


@lru_cache(maxsize=None)
def permutation_operator(n: int) -> np.ndarray:
    """``Pi = sum_ij E_ij (x) E_ji``; swaps the tensor legs."""
    P = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            P[i * n + j, j * n + i] = 1.0
    P.setflags(write=False)
    return P


def flip(X: np.ndarray, n: int) -> np.ndarray:
    Pi = permutation_operator(n)
    return Pi @ X @ Pi


def r_from_u(u: np.ndarray, z, w) -> np.ndarray:
    n = len(u)
    c_minus = _guarded_coth(z - w, "z - w")
    c_plus = _guarded_coth(z + w, "z + w")
    dtype = np.result_type(float, c_minus, c_plus)
    R = np.zeros((n * n, n * n), dtype=dtype)
    diag = np.arange(n) * (n + 1)  # flat index of (i, i)
    R[diag, diag] = 0.5 * (c_minus + c_plus)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            cu = 1.0 / np.tanh(u[i] - u[j])
            R[i * n + j, j * n + i] = 0.5 * (c_minus + cu)  # E_ij (x) E_ji
            R[i * n + i, j * n + j] = 0.5 * (c_plus + cu)  # E_ij (x) E_ij
    return R


def r12(s: State, z, w) -> np.ndarray:
    pair_table(s)  # separation guard
    return r_from_u(s.u, z, w)


def r21(s: State, w, z) -> np.ndarray:
    """``Pi r12(w, z) Pi``."""
    return flip(r12(s, w, z), s.n)


def lax_bracket_table(s: State, z, w) -> np.ndarray:
    """``{L_1(z), L_2(w)}`` as an N^2 x N^2 tensor in the module convention."""
    n = s.n
    Gz = lax_L_gradient(s, coth(z))
    Gw = lax_L_gradient(s, coth(w))
    B = np.einsum("abi,ij,cdj->abcd", Gz, poisson_tensor(s), Gw)
    return B.transpose(0, 2, 1, 3).reshape(n * n, n * n)


def rmatrix_sides(s: State, z, w) -> tuple[np.ndarray, np.ndarray, float]:
    """Left side, right side and operand scale of the linear r-matrix bracket."""
    n = s.n
    Lz, Lw = lax_L(s, z), lax_L(s, w)
    I = np.eye(n)
    L1 = np.kron(Lz, I)
    L2 = np.kron(I, Lw)
    R12 = r12(s, z, w)
    R21 = r21(s, w, z)
    rhs = (L1 @ R12 - R12 @ L1) - (L2 @ R21 - R21 @ L2)
    lhs = lax_bracket_table(s, z, w)
    nrm = np.linalg.norm
    scale = max(nrm(Lz) * nrm(Lw), nrm(Lz) * nrm(R12), nrm(Lw) * nrm(R21))
    return lhs, rhs, float(scale)


def rmatrix_residual(s: State, z, w) -> float:
    lhs, rhs, _ = rmatrix_sides(s, z, w)
    return float(np.abs(lhs - rhs).max())


def partial_trace_2(X: np.ndarray, n: int) -> np.ndarray:
    """Trace over the second tensor leg."""
    return np.einsum("acbc->ab", X.reshape(n, n, n, n))


def reconstruct_M(s: State, z, w) -> np.ndarray:
    """``1/2 (coth(z-w) + coth(z+w)) L(z) - tr_2(r12(z, w) L_2(w))``."""
    n = s.n
    L2 = np.kron(np.eye(n), lax_L(s, w))
    pt = partial_trace_2(r12(s, z, w) @ L2, n)
    c = 0.5 * (_guarded_coth(z - w, "z - w") + _guarded_coth(z + w, "z + w"))
    return c * lax_L(s, z) - pt


def m_from_r_residual(s: State, z, w) -> float:
    return float(np.abs(reconstruct_M(s, z, w) - lax_M(s)).max())
