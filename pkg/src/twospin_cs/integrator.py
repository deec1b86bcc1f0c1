"""Time integration of the equations of motion with invariant diagnostics.

Two methods: an embedded Dormand-Prince 5(4) pair with PI step control
(``adaptive``) and classical fixed-step RK4 (``rk4``) for convergence studies.
The state is integrated in its flat coordinates, so antisymmetry of S and T
holds exactly at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import eom, hamiltonian, pair_table
from .lax import lax_L, spectral_invariants
from .phase_space import SEP_MIN, SeparationError, State, casimirs

METHODS = ("adaptive", "rk4")

# Dormand-Prince 5(4); the field is autonomous so stage times are not needed
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


class CollisionError(RuntimeError):
    """The separation floor could not be kept by shrinking the step."""


class StepSizeError(RuntimeError):
    """Adaptive step size underflowed."""


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "adaptive"
    t_end: float = 10.0
    dt: float = 1e-2  # rk4 step; initial step guess for adaptive
    tol: float = 1e-12
    probe_z: float = 0.7
    sample_stride: int = 1
    sep_min: float = SEP_MIN
    max_rejections: int = 50
    max_steps: int = 10_000_000
    # abort when this many consecutive accepted steps are all shorter than
    # stall_ratio times the longest accepted step (noise-limited near-collision)
    stall_ratio: float = 1e-5
    stall_steps: int = 1000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 1e-15 < self.tol < 1e-3:
            raise ValueError("tol must lie in (1e-15, 1e-3)")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class Trajectory:
    """Sampled states with per-sample diagnostics.

    ``diagnostics`` maps a name to an array aligned with ``times``. Invariant
    columns are ``H``, ``trL<k>`` (at ``probe_z``), ``trS<2m>``, ``trT<2m>``;
    ``step`` and ``error`` describe the step that produced each sample.
    """

    times: np.ndarray
    states: list
    diagnostics: dict
    config: IntegratorConfig
    n_steps: int = 0
    n_rejected: int = 0
    n_eval: int = 0

    @property
    def n(self) -> int:
        return self.states[0].n

    def invariant_names(self) -> list[str]:
        return [k for k in self.diagnostics if k not in ("step", "error")]


def invariant_diagnostics(s: State, probe_z: float) -> dict:
    out = {"H": hamiltonian(s)}
    for k, t in enumerate(spectral_invariants(s, probe_z, s.n), start=2):
        out[f"trL{k}"] = float(t)
    for m, c in enumerate(casimirs(s.S), start=1):
        out[f"trS{2 * m}"] = float(c)
    for m, c in enumerate(casimirs(s.T), start=1):
        out[f"trT{2 * m}"] = float(c)
    return out


def invariant_scales(s: State, probe_z: float) -> dict:
    """Natural magnitude of each invariant, used as the drift denominator.

    ``H`` is measured by its kinetic plus absolute pair terms and ``tr L^k``
    by the sum of ``|eigenvalue|^k``, so an invariant that happens to sit
    near zero is not judged against its own small value. Spin traces are
    sums of like-signed terms already.
    """
    P = pair_table(s)
    S, T = s.S, s.T
    pot = np.abs((S * S + T * T) * P.inv_sinh2 - 2.0 * S * T * P.cosh_sinh2)
    out = {"H": float(0.5 * s.v @ s.v + 0.5 * pot.sum())}
    lam = np.abs(np.linalg.eigvals(lax_L(s, probe_z)))
    for k in range(2, s.n + 1):
        out[f"trL{k}"] = float(np.sum(lam**k))
    for m, c in enumerate(casimirs(s.S), start=1):
        out[f"trS{2 * m}"] = abs(float(c))
    for m, c in enumerate(casimirs(s.T), start=1):
        out[f"trT{2 * m}"] = abs(float(c))
    return out


class _Field:
    """Vector field on flat coordinates, optionally time-reversed."""

    def __init__(self, n: int, sign: float = 1.0, sep_min: float = SEP_MIN):
        self.n = n
        self.sign = sign
        self.sep_min = sep_min
        self.calls = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.calls += 1
        s = State.from_vector(self.n, x)
        s.check_separation(self.sep_min)
        return self.sign * eom(s).to_vector()


def _min_gap(n: int, x: np.ndarray, order: np.ndarray) -> float:
    """Smallest signed gap between neighbours in the initial ordering.

    A step that carries two particles past each other gives a negative gap,
    so it is rejected even when it lands far from the separation floor.
    """
    u = x[:n][order]
    return float((u[:-1] - u[1:]).min())


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(f, x, f0, tol) -> float:
    sc = tol + tol * np.abs(x)
    d0, d1 = _rms(x / sc), _rms(f0 / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    x1 = x + h0 * f0
    d2 = _rms((f(x1) - f0) / sc) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _dp_step(f, x, k1, h):
    ks = [k1]
    for i in range(1, 7):
        xi = x + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(xi))
    x_new = x + h * sum(b * k for b, k in zip(_B5, ks) if b)
    err = h * sum(e * k for e, k in zip(_E, ks) if e)
    return x_new, err, ks[-1]


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


class _Recorder:
    def __init__(self, n, cfg):
        self.n = n
        self.cfg = cfg
        self.times, self.states, self.diag = [], [], {}

    def add(self, t, x, step, err):
        s = State.from_vector(self.n, x)
        d = invariant_diagnostics(s, self.cfg.probe_z)
        d["step"], d["error"] = step, err
        for k, val in d.items():
            self.diag.setdefault(k, []).append(val)
        self.times.append(t)
        self.states.append(s)


def _integrate_flat(n, x0, cfg: IntegratorConfig, sign: float, record: bool):
    f = _Field(n, sign, cfg.sep_min)
    order = np.argsort(-x0[:n], kind="stable")
    rec = _Recorder(n, cfg) if record else None
    if rec:
        rec.add(0.0, x0, 0.0, 0.0)
    t, x = 0.0, x0.copy()
    n_steps = n_rejected = 0
    if cfg.method == "rk4":
        steps = max(1, math.ceil(cfg.t_end / cfg.dt - 1e-9))
        h = cfg.t_end / steps
        for i in range(steps):
            # a separation violation halves the step inside this grid cell only
            t_cell, h_sub, rejections = 0.0, h, 0
            while t_cell < h:
                h_try = min(h_sub, h - t_cell)
                try:
                    y = _rk4_step(f, x, h_try)
                    if _min_gap(n, y, order) < cfg.sep_min:
                        raise SeparationError("step crosses the separation floor")
                except SeparationError:
                    rejections += 1
                    n_rejected += 1
                    if rejections >= cfg.max_rejections or h_try < 1e-12 * h:
                        raise CollisionError(f"collision near t={t + t_cell:.6g}") from None
                    h_sub = 0.5 * h_try
                    continue
                rejections = 0
                x = y
                t_cell = h if h_try == h - t_cell else t_cell + h_try
            t = (i + 1) * h
            n_steps += 1
            if rec and (n_steps % cfg.sample_stride == 0 or i == steps - 1):
                rec.add(t, x, h, 0.0)
        return x, rec, n_steps, n_rejected, f.calls

    tol = cfg.tol
    k1 = f(x)
    h = min(_initial_step(f, x, k1, tol), cfg.t_end)
    err_prev = 1.0
    sep_rejections = 0
    h_max, n_small = 0.0, 0
    while t < cfg.t_end:
        if n_steps >= cfg.max_steps:
            raise StepSizeError("maximum number of steps exceeded")
        # stretch the step rather than leave a sliver of time for the next one
        last = t + h >= cfg.t_end * (1 - 1e-12)
        if last:
            h = cfg.t_end - t
        try:
            x_new, e, k_last = _dp_step(f, x, k1, h)
            if _min_gap(n, x_new, order) < cfg.sep_min:
                raise SeparationError("step crosses the separation floor")
        except SeparationError:
            sep_rejections += 1
            n_rejected += 1
            h *= 0.5
            # halving toward a contact point underflows before 50 rejections pile up
            if sep_rejections >= cfg.max_rejections or h < 1e-14 * max(1.0, abs(t)):
                raise CollisionError(f"collision near t={t:.6g}") from None
            continue
        sep_rejections = 0
        sc = tol + tol * np.maximum(np.abs(x), np.abs(x_new))
        err = _rms(e / sc)
        if err <= 1.0:
            t = cfg.t_end if last else t + h
            x, k1 = x_new, k_last
            n_steps += 1
            if rec and (n_steps % cfg.sample_stride == 0 or t >= cfg.t_end):
                rec.add(t, x, h, err)
            if not last:
                h_max = max(h_max, h)
                n_small = n_small + 1 if h < cfg.stall_ratio * h_max else 0
                if n_small >= cfg.stall_steps:
                    gap = _min_gap(n, x, order)
                    raise CollisionError(
                        f"integration stalled at t={t:.6g} with neighbour gap {gap:.3e}"
                    )
            fac = 0.9 * max(err, 1e-10) ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            h *= min(5.0, max(0.2, fac))
            err_prev = max(err, 1e-4)
        else:
            n_rejected += 1
            h *= max(0.2, 0.9 * err ** (-1 / 5))
        if t < cfg.t_end and h < 1e-14 * max(1.0, abs(t)):
            raise StepSizeError(f"step size underflow at t={t:.6g}")
    return x, rec, n_steps, n_rejected, f.calls


def integrate(s0: State, cfg: IntegratorConfig) -> Trajectory:
    s0.check_separation(cfg.sep_min)
    _, rec, n_steps, n_rej, calls = _integrate_flat(s0.n, s0.to_vector(), cfg, 1.0, True)
    diag = {k: np.array(v) for k, v in rec.diag.items()}
    return Trajectory(np.array(rec.times), rec.states, diag, cfg, n_steps, n_rej, calls)


def integrate_backward(s_end: State, cfg: IntegratorConfig) -> State:
    """Flow ``s_end`` backward in time by ``cfg.t_end``."""
    x, *_ = _integrate_flat(s_end.n, s_end.to_vector(), cfg, -1.0, False)
    return State.from_vector(s_end.n, x)


def relative_drift(values: np.ndarray, scale: float | None = None) -> float:
    """``max |q(t) - q(0)| / scale`` with ``scale`` defaulting to ``|q(0)|``.

    Absolute deviation is returned when the scale is zero.
    """
    values = np.asarray(values, dtype=float)
    dev = float(np.max(np.abs(values - values[0])))
    ref = abs(values[0]) if scale is None else scale
    return dev / ref if ref > 0 else dev


@dataclass
class DriftReport:
    drifts: dict
    reversal_mismatch: float | None
    max_drift: float = field(init=False)

    def __post_init__(self):
        self.max_drift = max(self.drifts.values()) if self.drifts else 0.0


def drift_report(tr: Trajectory, reversal: bool = True) -> DriftReport:
    """Max relative drift of each invariant, plus a time-reversal mismatch."""
    scales = invariant_scales(tr.states[0], tr.config.probe_z)
    drifts = {k: relative_drift(tr.diagnostics[k], scales[k]) for k in tr.invariant_names()}
    mismatch = None
    if reversal:
        back = integrate_backward(tr.states[-1], tr.config)
        mismatch = float(np.abs(back.to_vector() - tr.states[0].to_vector()).max())
    return DriftReport(drifts, mismatch)
