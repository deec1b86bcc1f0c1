"""Named, tolerance-tagged identity checks over randomized States.

Every residual is dimensionless: the raw defect divided by a scale built
from the norms of the identity's operands (Frobenius norms for matrices), or
by the sum of absolute terms for brackets that must cancel to zero.
"""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import brackets as br
from .dynamics import (
    bc1_hamiltonian,
    bc1_reduction,
    eom,
    eom_via_brackets,
    hamiltonian,
    hamiltonian_gradient,
)
from .integrator import IntegratorConfig, drift_report, integrate
from .lax import (
    chart_relation_residual,
    coth,
    commutator,
    independent_integral_rank,
    integral_count_formula,
    lax_L,
    lax_L_dot,
    lax_L_w,
    lax_M,
    paper_Ilk,
    trace_bracket,
)
from .phase_space import OrbitSpec, State, random_state
from .rmatrix import r12, reconstruct_M, rmatrix_sides

GUARD = 0.05
Z_RANGE = (0.1, 3.0)

# finite-difference oracles (the eom-bracket cross-check and ilk)
FD_TOLERANCE = 1e-6

DEFAULT_TOLERANCES = {
    "lax": 1e-12,
    "r15": 1e-11,
    "r17": 1e-12,
    "tdot": 1e-12,
    "eom-bracket": 1e-10,
    "chart": 1e-12,
    "casimir": 1e-10,
    "jacobi": 1e-10,
    "count": 0.0,
    "i4": 1e-12,
    "involution": 1e-10,
    "ilk": FD_TOLERANCE,
    "conservation": 1e-8,
}


class UnknownCheckError(KeyError):
    pass


@dataclass
class CheckResult:
    name: str
    N: int
    seed: int
    residual: float
    tolerance: float
    passed: bool = field(init=False)
    details: dict = field(default_factory=dict)
    z: object = None

    def __post_init__(self):
        self.passed = bool(self.residual <= self.tolerance)

    def to_record(self) -> dict:
        return {
            "check": self.name,
            "N": self.N,
            "seed": self.seed,
            "z": self.z,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# sampling --------------------------------------------------------------------


def sample_state(n: int, seed: int, min_gap: float = 0.2) -> State:
    """Generic test State: O(1) orbit angles, positions spread over ~N."""
    rng = np.random.default_rng([seed, n, 7])
    spec_S = OrbitSpec(n, rng.uniform(0.4, 1.4, n // 2))
    spec_T = OrbitSpec(n, rng.uniform(0.4, 1.4, n // 2))
    return random_state(spec_S, spec_T, seed, position_spread=0.8 * n + 1.0,
                        momentum_spread=1.0, sep_min=min_gap)


def _rng(name: str, n: int, seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, n, zlib.crc32(name.encode())])


def sample_z(rng) -> float:
    return float(rng.uniform(*Z_RANGE))


def sample_zw(rng) -> tuple[float, float]:
    while True:
        z, w = rng.uniform(*Z_RANGE, size=2)
        if abs(z - w) >= GUARD and abs(z + w) >= GUARD:
            return float(z), float(w)


def _fro(A) -> float:
    return float(np.linalg.norm(A))


# checks ----------------------------------------------------------------------


def check_lax(s: State, rng) -> tuple[float, dict]:
    M = lax_M(s)
    worst, zs = 0.0, []
    for _ in range(5):
        z = sample_z(rng)
        zs.append(z)
        L = lax_L(s, z)
        Ld = lax_L_dot(s, z)
        scale = max(_fro(L) * _fro(M), _fro(Ld))
        worst = max(worst, float(np.abs(Ld - commutator(L, M)).max()) / scale)
    return worst, {"z": zs}


def check_eom_bracket(s: State, rng) -> tuple[float, dict]:
    a = eom(s).to_vector()
    b = eom_via_brackets(s).to_vector()
    rel = float(np.abs(a - b).max() / np.abs(a).max())
    # independent oracle: gradient of H by finite differences, values only
    g_fd = br.fd_gradient(hamiltonian, s)
    c = g_fd @ br.poisson_tensor(s)
    fd_rel = float(np.abs(a - c).max() / np.abs(a).max())
    return rel, {"fd_oracle_rel": fd_rel, "fd_pass": fd_rel <= FD_TOLERANCE}


def check_tdot(s: State, rng) -> tuple[float, dict]:
    dT = eom_via_brackets(s).dT
    M = lax_M(s)
    scale = _fro(s.T) * _fro(M)
    return float(np.abs(dT - commutator(s.T, M)).max()) / scale, {}


def check_r15(s: State, rng) -> tuple[float, dict]:
    worst, zw = 0.0, []
    for _ in range(3):
        z, w = sample_zw(rng)
        zw.append([z, w])
        lhs, rhs, scale = rmatrix_sides(s, z, w)
        worst = max(worst, float(np.abs(lhs - rhs).max()) / scale)
    return worst, {"zw": zw}


def check_r17(s: State, rng) -> tuple[float, dict]:
    worst, w_spread, zw = 0.0, 0.0, []
    M = lax_M(s)
    for _ in range(3):
        z, w = sample_zw(rng)
        zw.append([z, w])
        c = 0.5 * (coth(z - w) + coth(z + w))
        scale = max(abs(c) * _fro(lax_L(s, z)), _fro(r12(s, z, w)) * _fro(lax_L(s, w)))
        M1 = reconstruct_M(s, z, w)
        worst = max(worst, float(np.abs(M1 - M).max()) / scale)
        # a second w must give the same M
        while True:
            w2 = float(rng.uniform(*Z_RANGE))
            if abs(z - w2) >= GUARD and abs(w2 - w) >= GUARD:
                break
        c2 = 0.5 * (coth(z - w2) + coth(z + w2))
        scale2 = max(scale, abs(c2) * _fro(lax_L(s, z)),
                     _fro(r12(s, z, w2)) * _fro(lax_L(s, w2)))
        w_spread = max(w_spread, float(np.abs(reconstruct_M(s, z, w2) - M1).max()) / scale2)
    return max(worst, w_spread), {"zw": zw, "w_independence": w_spread}


def check_chart(s: State, rng) -> tuple[float, dict]:
    worst, worst_neg, z1s = 0.0, math.inf, []
    for _ in range(5):
        while True:
            z1 = float(rng.uniform(-2.0, 2.0))
            if abs(z1) >= GUARD and abs(z1 - 1) >= GUARD:
                break
        z1s.append(z1)
        scale = _fro(lax_L_w(s, -(1 + z1) / z1))
        worst = max(worst, chart_relation_residual(s, z1) / scale)
        worst_neg = min(worst_neg, chart_relation_residual(s, z1, rescale=False) / scale)
    return worst, {"z1": z1s, "negative_control_min": worst_neg}


def check_casimir(s: State, rng) -> tuple[float, dict]:
    J = br.poisson_tensor(s)
    worst = 0.0
    for kind in ("S", "T"):
        for m in range(1, s.n // 2 + 1):
            g = br.trace_power(kind, 2 * m).grad(s)
            vals = g @ J
            scales = np.abs(g) @ np.abs(J)
            top = scales.max()
            if top > 0:
                worst = max(worst, float(np.abs(vals).max() / top))
    return worst, {}


def check_jacobi(s: State, rng) -> tuple[float, dict]:
    Jac = br.jacobiator(s)
    J = br.poisson_tensor(s)
    dJ = br.poisson_tensor_derivative(s.n)
    X = np.einsum("ad,bcd->abc", np.abs(J), np.abs(dJ))
    scale = (X + X.transpose(1, 2, 0) + X.transpose(2, 0, 1)).max()
    return float(np.abs(Jac).max() / scale) if scale > 0 else 0.0, {"triples": Jac.size}


def check_count(s: State, rng) -> tuple[float, dict]:
    n = s.n
    n_g, n_gp = integral_count_formula(n)
    # closed forms, independently of the summation
    defect = abs(2 * n_g - (n - 1) * (n + 2)) + abs(n_gp - (n_g - n // 2))
    c = independent_integral_rank(s)
    defect += abs(c.rank - c.family_prediction)
    details = {
        "N_G": n_g,
        "N_G_prime": n_gp,
        "rank": c.rank,
        "family_prediction": c.family_prediction,
        "formula_rank": c.formula_rank,
        "rank_with_momentum": c.rank_with_momentum,
        "leaf_half_dimension": c.leaf_half_dimension,
        "shortfall": c.shortfall,
    }
    return float(defect), details


def check_degenerations(s: State, rng) -> tuple[float, dict]:
    """BC1 agreement and two-body spin freezing at N=2; T=0 invariance at N."""
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(0.1, 2.0)
        v = rng.uniform(-2, 2, size=2)
        m1, m2 = rng.uniform(-2, 2, size=2)
        s2 = State(2, [a, -a], v, [m1], [m2])
        q, pr, mm1, mm2, P = bc1_reduction(s2)
        ref = 0.25 * P * P + bc1_hamiltonian(q, pr, mm1, mm2)
        h = hamiltonian(s2)
        # relative to the size of the terms, so near-cancelling energies are fair
        size = 0.25 * P * P + 0.5 * pr * pr + (mm1**2 + mm2**2 + 2 * abs(mm1 * mm2) * np.cosh(2 * q)) / np.sinh(2 * q) ** 2
        worst = max(worst, abs(h - ref) / size)
        d = eom(s2)
        worst = max(worst, float(np.abs(d.dS).max() + np.abs(d.dT).max()))
    s0 = s.replace(T_upper=np.zeros_like(s.T_upper))
    t_zero = float(np.abs(eom(s0).dT).max())
    return max(worst, t_zero), {"evaluated_N": [2, s.n], "T0_dT": t_zero}


def check_involution(s: State, rng) -> tuple[float, dict]:
    worst = 0.0
    for _ in range(10):
        z, w = sample_zw(rng)
        for k in range(2, s.n + 1):
            for m in range(2, s.n + 1):
                val, scale = trace_bracket(s, z, k, w, m)
                if scale > 0:
                    worst = max(worst, abs(val) / scale)
    return worst, {}


def check_ilk(s: State, rng) -> tuple[float, dict]:
    """Even-l ``I_{l,1}`` as Casimirs of T, odd-l parity, conservation of every I_lk.

    Gradients come from finite differences, so the residual is judged at the
    FD tolerance. The Casimir property and exact odd-l vanishing enter the
    residual; conservation of the whole family is reported.
    """
    n = s.n
    J = br.poisson_tensor(s)
    gH = hamiltonian_gradient(s)
    casimir, parity, conserved = {}, {}, {}
    # FD noise sits in every slot, so scale by the largest gradient entry
    col = np.abs(J).sum(axis=0)
    flow_col = np.abs(gH) @ np.abs(J)
    for l in range(2, n + 1):
        if l % 2:
            scale = float(np.sum(np.abs(np.linalg.eigvals(s.T)) ** l)) or 1.0
            parity[l] = abs(paper_Ilk(s, l, 0)) / scale
        for k in range(1, l + 1):
            g = br.fd_gradient(lambda st: paper_Ilk(st, l, k), s)
            gmax = float(np.abs(g).max())
            conserved[f"{l},{k}"] = abs(gH @ J @ g) / (gmax * flow_col.sum())
            if k == 1 and l % 2 == 0:
                casimir[l] = float(np.abs(g @ J).max() / (gmax * col.max()))
    # any nonzero odd-l trace is a hard failure
    residual = max(casimir.values()) if not any(parity.values()) else math.inf
    return residual, {
        "casimir_even_l1": casimir,
        "odd_parity": parity,
        "flow_derivative": conserved,
        "all_conserved": max(conserved.values()) <= FD_TOLERANCE,
    }


def check_conservation(s: State, rng, t_end: float = 10.0) -> tuple[float, dict]:
    cfg = IntegratorConfig(method="adaptive", t_end=t_end, tol=1e-12, sample_stride=10)
    tr = integrate(s, cfg)
    rep = drift_report(tr, reversal=False)
    return rep.max_drift, {"drifts": rep.drifts, "steps": tr.n_steps}


CHECKS: dict[str, Callable] = {
    "lax": check_lax,
    "r15": check_r15,
    "r17": check_r17,
    "tdot": check_tdot,
    "eom-bracket": check_eom_bracket,
    "chart": check_chart,
    "casimir": check_casimir,
    "jacobi": check_jacobi,
    "count": check_count,
    "i4": check_degenerations,
    "involution": check_involution,
    "ilk": check_ilk,
    "conservation": check_conservation,
}


def run_check(name: str, n: int, seed: int, tolerance: float | None = None) -> CheckResult:
    if name not in CHECKS:
        raise UnknownCheckError(name)
    tol = DEFAULT_TOLERANCES[name] if tolerance is None else tolerance
    s = sample_state(n, seed)
    residual, details = CHECKS[name](s, _rng(name, n, seed))
    z = details.get("z")
    return CheckResult(name, n, seed, float(residual), tol, details, z)


def _run_one(args):
    return run_check(*args)


def run_checks(
    names: list[str],
    N_list: list[int],
    seeds: list[int],
    tolerances: dict | None = None,
    workers: int = 1,
) -> list[CheckResult]:
    """One result per (name, N, seed), sorted in that order."""
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UnknownCheckError(", ".join(unknown))
    tolerances = tolerances or {}
    jobs = [(name, n, seed, tolerances.get(name)) for name in names for n in N_list for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    order = {name: i for i, name in enumerate(names)}
    return sorted(results, key=lambda r: (order[r.name], r.N, r.seed))
