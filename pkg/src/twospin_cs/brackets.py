"""Poisson bracket engine.

Phase coordinates are flattened as ``x = (u, v, S_upper, T_upper)``. The
bracket is ``{F, G} = grad F . J(x) . grad G`` with

* canonical block ``{v_k, u_j} = delta_jk``,
* ``{S_ij, S_kl} = -1/2 (S_il d_kj - S_kj d_il - S_ik d_lj + S_lj d_ik)``,
* ``{T_ij, T_kl} = +1/2 (T_il d_kj - T_kj d_il - T_ik d_lj + T_lj d_ik)``,
* ``{S, T} = 0``.

Time evolution is ``dF/dt = {H, F}``, which gives ``du/dt = dH/dv``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .phase_space import State, n_pairs, phase_dim, upper_pairs


@dataclass(frozen=True)
class Gradient:
    """Derivatives with respect to the independent coordinates.

    ``d_S[p]`` differentiates the upper entry ``S[i, j]`` (``i < j``) of the
    p-th pair; the lower entry follows by antisymmetry.
    """

    d_u: np.ndarray
    d_v: np.ndarray
    d_S: np.ndarray
    d_T: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_u, self.d_v, self.d_S, self.d_T])

    @classmethod
    def from_flat(cls, n: int, g) -> "Gradient":
        g = np.asarray(g)
        m = n_pairs(n)
        return cls(g[:n], g[n:2 * n], g[2 * n:2 * n + m], g[2 * n + m:])


@dataclass(frozen=True)
class Observable:
    """A scalar phase-space function with its analytic gradient."""

    eval: Callable[[State], float]
    grad: Callable[[State], np.ndarray]  # flat gradient, length phase_dim(n)
    name: str = ""

    def __call__(self, s: State) -> float:
        return self.eval(s)

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(
            lambda s: self.eval(s) + other.eval(s),
            lambda s: self.grad(s) + other.grad(s),
            f"({self.name}+{other.name})",
        )

    def __mul__(self, other):
        if isinstance(other, Observable):
            return Observable(
                lambda s: self.eval(s) * other.eval(s),
                lambda s: self.eval(s) * other.grad(s) + other.eval(s) * self.grad(s),
                f"{self.name}*{other.name}",
            )
        c = float(other)
        return Observable(lambda s: c * self.eval(s), lambda s: c * self.grad(s), f"{c:g}*{self.name}")

    __rmul__ = __mul__


def _unit(n: int, a: int, sign: float = 1.0) -> np.ndarray:
    g = np.zeros(phase_dim(n))
    g[a] = sign
    return g


def spin_slot(n: int, i: int, j: int) -> tuple[int, float]:
    """Position of spin entry (i, j) inside its upper-triangular block, with sign."""
    if i == j:
        raise ValueError("diagonal spin entries are identically zero")
    a, b = (i, j) if i < j else (j, i)
    p = a * n - a * (a + 1) // 2 + (b - a - 1)
    return p, 1.0 if i < j else -1.0


def coordinate(n: int, kind: str, *idx: int) -> Observable:
    """Coordinate observable: ``kind`` is one of ``u``, ``v``, ``S``, ``T``."""
    m = n_pairs(n)
    if kind in ("u", "v"):
        (i,) = idx
        a = i if kind == "u" else n + i
        g = _unit(n, a)
        return Observable(lambda s: float(s.to_vector()[a]), lambda s: g, f"{kind}{i}")
    i, j = idx
    if i == j:
        zero = np.zeros(phase_dim(n))
        return Observable(lambda s: 0.0, lambda s: zero, f"{kind}{i}{j}")
    p, sign = spin_slot(n, i, j)
    a = 2 * n + p + (m if kind == "T" else 0)
    g = _unit(n, a, sign)
    return Observable(lambda s: sign * float(s.to_vector()[a]), lambda s: g, f"{kind}{i}{j}")


def coordinate_observables(n: int) -> list[Observable]:
    """One observable per independent coordinate, in flat order."""
    obs = [coordinate(n, "u", i) for i in range(n)]
    obs += [coordinate(n, "v", i) for i in range(n)]
    obs += [coordinate(n, "S", i, j) for i, j in upper_pairs(n)]
    obs += [coordinate(n, "T", i, j) for i, j in upper_pairs(n)]
    return obs


def _paren(A, i, j, k, l) -> float:
    # A_il d_kj - A_kj d_il - A_ik d_lj + A_lj d_ik
    return (
        A[i, l] * (k == j) - A[k, j] * (i == l) - A[i, k] * (l == j) + A[l, j] * (i == k)
    )


def spin_bracket_S(i: int, j: int, k: int, l: int, s: State) -> float:
    return -0.5 * _paren(s.S, i, j, k, l)


def spin_bracket_T(i: int, j: int, k: int, l: int, s: State) -> float:
    return 0.5 * _paren(s.T, i, j, k, l)


@lru_cache(maxsize=None)
def spin_structure_constants(n: int) -> np.ndarray:
    """``C[a, b, c]`` with ``paren(A; pair a, pair b) = sum_c C[a, b, c] A_upper[c]``."""
    pairs = upper_pairs(n)
    m = len(pairs)
    C = np.zeros((m, m, m))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            for (x, y), coeff in (
                ((i, l), float(k == j)),
                ((k, j), -float(i == l)),
                ((i, k), -float(l == j)),
                ((l, j), float(i == k)),
            ):
                if coeff and x != y:
                    c, sign = spin_slot(n, x, y)
                    C[a, b, c] += coeff * sign
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def poisson_tensor_derivative(n: int) -> np.ndarray:
    """Constant ``dJ[a, b, c] = dJ_ab / dx_c``; the spin blocks are linear."""
    m = n_pairs(n)
    D = phase_dim(n)
    C = spin_structure_constants(n)
    dJ = np.zeros((D, D, D))
    s0 = 2 * n
    t0 = 2 * n + m
    dJ[s0:t0, s0:t0, s0:t0] = -0.5 * C
    dJ[t0:, t0:, t0:] = 0.5 * C
    dJ.setflags(write=False)
    return dJ


def poisson_tensor(s: State) -> np.ndarray:
    """Matrix ``J`` with ``{x_a, x_b} = J[a, b]``."""
    n, m = s.n, n_pairs(s.n)
    D = phase_dim(n)
    J = np.zeros((D, D))
    idx = np.arange(n)
    J[n + idx, idx] = 1.0
    J[idx, n + idx] = -1.0
    C = spin_structure_constants(n)
    s0, t0 = 2 * n, 2 * n + m
    J[s0:t0, s0:t0] = -0.5 * (C @ s.S_upper)
    J[t0:, t0:] = 0.5 * (C @ s.T_upper)
    return J


def poisson(F: Observable, G: Observable, s: State) -> float:
    """``{F, G}`` summed over the upper triangle of J.

    Writing the bracket as ``sum_{a<b} J_ab (f_a g_b - f_b g_a)`` makes it
    antisymmetric bit for bit, so ``{F, F}`` is exactly zero.
    """
    f, g = F.grad(s), G.grad(s)
    J = poisson_tensor(s)
    a, b = np.triu_indices(J.shape[0], 1)
    return float(J[a, b] @ (f[a] * g[b] - f[b] * g[a]))


def poisson_terms_scale(gF: np.ndarray, gG: np.ndarray, J: np.ndarray) -> float:
    """Sum of the absolute values of every term in ``gF . J . gG``.

    This is the natural rounding scale for a bracket that cancels to zero.
    """
    return float(np.abs(gF) @ np.abs(J) @ np.abs(gG))


def coordinate_bracket(n: int, a: int, b: int) -> Observable:
    """The observable ``{x_a, x_b}``, linear in the spins."""
    dJ = poisson_tensor_derivative(n)
    g = np.array(dJ[a, b])

    def value(s: State) -> float:
        return float(poisson_tensor(s)[a, b])

    return Observable(value, lambda s: g, f"{{x{a},x{b}}}")


def jacobiator(s: State) -> np.ndarray:
    """``Jac[a,b,c] = {x_a,{x_b,x_c}} + {x_b,{x_c,x_a}} + {x_c,{x_a,x_b}}``."""
    J = poisson_tensor(s)
    dJ = poisson_tensor_derivative(s.n)
    # {x_a, J_bc(x)} = sum_d J_ad dJ_bc/dx_d
    X = np.einsum("ad,bcd->abc", J, dJ)
    return X + X.transpose(1, 2, 0) + X.transpose(2, 0, 1)


# finite-difference oracle --------------------------------------------------

_STENCIL = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))


def fd_gradient(f: Callable[[State], float], s: State, h: float = 1e-5) -> np.ndarray:
    """Fourth-order centered differences in every independent coordinate."""
    x = s.to_vector()
    g = np.zeros_like(x)
    for a in range(x.size):
        acc = 0.0
        for k, w in _STENCIL:
            y = x.copy()
            y[a] += k * h
            acc += w * f(State.from_vector(s.n, y))
        g[a] = acc / (12.0 * h)
    return g


def fd_gradient_richardson(f, s: State, h: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Gradient at step h plus a Richardson error estimate from step 2h."""
    g1 = fd_gradient(f, s, h)
    g2 = fd_gradient(f, s, 2 * h)
    return g1, np.abs(g2 - g1) / 15.0


def poisson_fd(F, G, s: State, h: float = 1e-5) -> float:
    """Bracket with both gradients from finite differences of the values only."""
    f = F.eval if isinstance(F, Observable) else F
    g = G.eval if isinstance(G, Observable) else G
    return float(fd_gradient(f, s, h) @ poisson_tensor(s) @ fd_gradient(g, s, h))


def trace_power(kind: str, k: int) -> Observable:
    """``tr S^k`` or ``tr T^k`` with analytic gradient."""
    if kind not in ("S", "T"):
        raise ValueError(kind)

    def value(s: State) -> float:
        A = s.S if kind == "S" else s.T
        return float(np.trace(np.linalg.matrix_power(A, k)))

    def grad(s: State) -> np.ndarray:
        n, m = s.n, n_pairs(s.n)
        A = s.S if kind == "S" else s.T
        P = np.linalg.matrix_power(A, k - 1)
        iu = np.triu_indices(n, 1)
        block = k * (P.T - P)[iu]
        g = np.zeros(phase_dim(n))
        off = 2 * n + (m if kind == "T" else 0)
        g[off:off + m] = block
        return g

    return Observable(value, grad, f"tr{kind}^{k}")
