"""Phase-space data model: particle positions/momenta and two so(N) spins.

Spin matrices are stored by their strictly-upper-triangular entries only, so
antisymmetry holds by construction. Indices are 0-based throughout; pair
``(i, j)`` with ``i < j`` is numbered in row-major (lexicographic) order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SEP_MIN = 1e-6


class SeparationError(ValueError):
    """Two particles are closer than the separation floor."""


@lru_cache(maxsize=None)
def upper_pairs(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


@lru_cache(maxsize=None)
def _upper_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def phase_dim(n: int) -> int:
    """Number of independent coordinates: u, v and the upper spin entries."""
    return 2 * n + 2 * n_pairs(n)


def antisym_from_upper(n: int, upper) -> np.ndarray:
    iu = _upper_index(n)
    upper = np.asarray(upper)
    A = np.zeros((n, n), dtype=upper.dtype if upper.size else float)
    A[iu] = upper
    A[(iu[1], iu[0])] = -upper
    return A


def upper_of(A: np.ndarray) -> np.ndarray:
    return np.asarray(A)[_upper_index(A.shape[0])]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class State:
    """A point of the phase space.

    ``S_upper`` and ``T_upper`` hold the entries ``S[i, j]`` for ``i < j``;
    the full matrices are materialized by the ``S`` and ``T`` properties.
    """

    n: int
    u: np.ndarray
    v: np.ndarray
    S_upper: np.ndarray
    T_upper: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise ValueError(f"need at least 2 particles, got n={n}")
        object.__setattr__(self, "n", n)
        for name, size in (("u", n), ("v", n), ("S_upper", n_pairs(n)), ("T_upper", n_pairs(n))):
            arr = _frozen(getattr(self, name)).reshape(-1)
            if arr.shape != (size,):
                raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_matrices(cls, u, v, S, T) -> "State":
        """Build from full spin matrices; they must be antisymmetric."""
        S = np.asarray(S, dtype=float)
        T = np.asarray(T, dtype=float)
        n = len(u)
        for name, A in (("S", S), ("T", T)):
            if A.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            if not np.array_equal(A, -A.T):
                raise ValueError(f"{name} is not antisymmetric")
        return cls(n, u, v, upper_of(S), upper_of(T))

    @classmethod
    def from_vector(cls, n: int, x) -> "State":
        x = np.asarray(x, dtype=float)
        m = n_pairs(n)
        return cls(n, x[:n], x[n:2 * n], x[2 * n:2 * n + m], x[2 * n + m:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.v, self.S_upper, self.T_upper])

    @property
    def S(self) -> np.ndarray:
        if "S" not in self._cache:
            self._cache["S"] = antisym_from_upper(self.n, self.S_upper)
        return self._cache["S"]

    @property
    def T(self) -> np.ndarray:
        if "T" not in self._cache:
            self._cache["T"] = antisym_from_upper(self.n, self.T_upper)
        return self._cache["T"]

    def replace(self, **changes) -> "State":
        fields = dict(n=self.n, u=self.u, v=self.v, S_upper=self.S_upper, T_upper=self.T_upper)
        fields.update(changes)
        return State(**fields)

    def min_separation(self) -> float:
        d = np.abs(self.u[:, None] - self.u[None, :])
        return float(d[_upper_index(self.n)].min())

    def check_separation(self, sep_min: float = SEP_MIN) -> None:
        gap = self.min_separation()
        if not gap >= sep_min:
            raise SeparationError(f"minimum particle separation {gap:.3e} below {sep_min:.1e}")

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        # float repr is the shortest string that round-trips exactly
        return {
            "n": self.n,
            "u": [float(x) for x in self.u],
            "v": [float(x) for x in self.v],
            "S_upper": [float(x) for x in self.S_upper],
            "T_upper": [float(x) for x in self.T_upper],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "State":
        return cls(int(d["n"]), d["u"], d["v"], d["S_upper"], d["T_upper"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "State":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.n == other.n and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("u", "v", "S_upper", "T_upper")
        )

    __hash__ = None


def validate_state(s, sep_min: float = SEP_MIN) -> list[str]:
    """Return descriptions of every violated State invariant.

    Accepts a :class:`State` or any object exposing ``u``, ``v``, ``S`` and
    ``T`` (full matrices), so raw data can be screened before construction.
    """
    problems = []
    u = np.asarray(s.u, dtype=float)
    v = np.asarray(s.v, dtype=float)
    S = np.asarray(s.S, dtype=float)
    T = np.asarray(s.T, dtype=float)
    n = u.shape[0]
    if v.shape != (n,) or S.shape != (n, n) or T.shape != (n, n):
        return ["shape mismatch"]
    if not all(np.isfinite(a).all() for a in (u, v, S, T)):
        problems.append("non-finite entries")
    if not (np.array_equal(S, -S.T) and np.array_equal(T, -T.T)):
        problems.append("antisymmetry violated")
    if n > 1 and not np.all(np.diff(u) < 0):
        problems.append("ordering violated")
    if n > 1:
        gaps = np.abs(u[:, None] - u[None, :])[np.triu_indices(n, 1)]
        if not gaps.min() >= sep_min:
            problems.append("separation violated")
    return problems


@dataclass(frozen=True)
class OrbitSpec:
    """Spectral data ``±i*angles`` of an so(N) coadjoint orbit.

    Angles are canonicalized to descending order; negatives are rejected.
    """

    n: int
    angles: tuple

    def __post_init__(self):
        angles = tuple(float(a) for a in np.ravel(self.angles))
        if len(angles) != self.n // 2:
            raise ValueError(f"so({self.n}) orbit needs {self.n // 2} angles, got {len(angles)}")
        if any(a < 0 for a in angles):
            raise ValueError("orbit angles must be non-negative")
        object.__setattr__(self, "angles", tuple(sorted(angles, reverse=True)))

    @property
    def dimension(self) -> int:
        return orbit_dimension(self.n)


def orbit_dimension(n: int) -> int:
    """Real dimension of a generic SO(N) coadjoint orbit."""
    return n_pairs(n) - n // 2


def canonical_so_matrix(spec: OrbitSpec) -> np.ndarray:
    C = np.zeros((spec.n, spec.n))
    for j, theta in enumerate(spec.angles):
        C[2 * j, 2 * j + 1] = theta
        C[2 * j + 1, 2 * j] = -theta
    return C


def casimirs(A: np.ndarray) -> np.ndarray:
    """``tr A^(2m)`` for m = 1..[N/2]."""
    A2 = A @ A
    out, P = [], np.eye(A.shape[0])
    for _ in range(A.shape[0] // 2):
        P = P @ A2
        out.append(np.trace(P))
    return np.array(out)


def random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of SO(n)."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def _conjugate(Q: np.ndarray, C: np.ndarray) -> np.ndarray:
    A = Q @ C @ Q.T
    return 0.5 * (A - A.T)


def random_state(
    spec_S: OrbitSpec,
    spec_T: OrbitSpec,
    seed: int,
    position_spread: float = 4.0,
    momentum_spread: float = 1.0,
    sep_min: float = SEP_MIN,
    max_redraws: int = 1000,
) -> State:
    """Sample a State with spins on the given orbits, deterministically in ``seed``."""
    if spec_S.n != spec_T.n:
        raise ValueError("orbit specs disagree on N")
    n = spec_S.n
    rng = np.random.default_rng(seed)
    for _ in range(max_redraws):
        u = np.sort(rng.uniform(-0.5 * position_spread, 0.5 * position_spread, n))[::-1]
        if np.min(-np.diff(u)) >= sep_min:
            break
    else:
        raise ValueError(
            f"could not place {n} particles {sep_min:g} apart in a window of width {position_spread:g}"
        )
    v = rng.uniform(-momentum_spread, momentum_spread, n)
    S = _conjugate(random_rotation(n, rng), canonical_so_matrix(spec_S))
    T = _conjugate(random_rotation(n, rng), canonical_so_matrix(spec_T))
    return State(n, u, v, upper_of(S), upper_of(T))
