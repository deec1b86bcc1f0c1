"""Run configuration parsing and trajectory export.

Configs are YAML (human-edited) or JSON (machine-generated). Errors carry
the line of the offending key where it can be located.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .integrator import METHODS, IntegratorConfig, Trajectory, invariant_scales, relative_drift
from .phase_space import OrbitSpec, State, upper_pairs


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# loading with line tracking ----------------------------------------------


def _line_map(node, prefix=(), out=None) -> dict:
    """Map key paths to 1-based line numbers from a composed YAML node tree."""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = prefix + (i,)
            out[path] = v.start_mark.line + 1
            _line_map(v, path, out)
    return out


@dataclass
class RawConfig:
    data: dict
    source: str
    lines: dict = field(default_factory=dict)

    def error(self, path: tuple, message: str) -> ConfigError:
        line = None
        for cut in range(len(path), 0, -1):
            if path[:cut] in self.lines:
                line = self.lines[path[:cut]]
                break
        dotted = ".".join(str(p) for p in path)
        return ConfigError(f"{dotted}: {message}" if dotted else message, self.source, line)


def parse_config_text(text: str, source: str = "<config>", fmt: str | None = None) -> RawConfig:
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "yaml"
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", source, e.lineno) from None
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            problem = getattr(e, "problem", None) or str(e)
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(f"invalid YAML: {problem}", source, line) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source, 1)
    try:
        lines = _line_map(yaml.compose(text))
    except yaml.YAMLError:
        lines = {}
    return RawConfig(data, source, lines)


def load_config_file(path) -> RawConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    fmt = "json" if path.suffix.lower() == ".json" else None
    return parse_config_text(text, str(path), fmt)


# typed run configuration ----------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    n: int
    seed: int
    angles_S: tuple
    angles_T: tuple
    position_spread: float = 4.0
    momentum_spread: float = 1.0
    angle_scale: float = 1.0
    initial_state: State | None = None
    integrator: IntegratorConfig = IntegratorConfig()
    out_dir: str = "out"
    name: str = "trajectory"
    checks: tuple = ()

    def initial(self) -> State:
        if self.initial_state is not None:
            return self.initial_state
        from .phase_space import random_state

        spec_S = OrbitSpec(self.n, [self.angle_scale * a for a in self.angles_S])
        spec_T = OrbitSpec(self.n, [self.angle_scale * a for a in self.angles_T])
        return random_state(
            spec_S, spec_T, self.seed, self.position_spread, self.momentum_spread,
            sep_min=self.integrator.sep_min,
        )

    def to_dict(self) -> dict:
        d = {
            "N": self.n,
            "seed": self.seed,
            "orbits": {"S": list(self.angles_S), "T": list(self.angles_T)},
            "spread": {"position": self.position_spread, "momentum": self.momentum_spread},
            "angle_scale": self.angle_scale,
            "integrator": {
                "method": self.integrator.method,
                "t_end": self.integrator.t_end,
                "dt": self.integrator.dt,
                "tol": self.integrator.tol,
                "probe_z": self.integrator.probe_z,
                "sample_stride": self.integrator.sample_stride,
                "sep_min": self.integrator.sep_min,
            },
            "output": {"dir": self.out_dir, "name": self.name},
            "checks": list(self.checks),
        }
        if self.initial_state is not None:
            d["state"] = self.initial_state.to_dict()
        return d


_TOP_KEYS = {"N", "seed", "orbits", "spread", "angle_scale", "state", "integrator", "output", "checks"}
_INTEGRATOR_KEYS = {"method", "t_end", "dt", "tol", "probe_z", "sample_stride", "sep_min", "max_rejections"}


def _number(raw: RawConfig, path, value, kind=float):
    # PyYAML reads "1e-8" as a string, so numeric strings are accepted
    try:
        if isinstance(value, bool):
            raise ValueError
        x = kind(float(value)) if kind is int else float(value)
        if kind is int and float(value) != x:
            raise ValueError
    except (TypeError, ValueError):
        raise raw.error(path, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise raw.error(path, "must be finite")
    return x


def _section(raw: RawConfig, data, path) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise raw.error(path, "expected a mapping")
    return data


def _number_list(raw, path, value, length=None):
    if not isinstance(value, list):
        raise raw.error(path, "expected a list of numbers")
    out = [_number(raw, path + (i,), v) for i, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise raw.error(path, f"expected {length} entries, got {len(out)}")
    return out


def build_run_config(raw: RawConfig, overrides: dict | None = None) -> RunConfig:
    d = dict(raw.data)
    for key in d:
        if key not in _TOP_KEYS and key not in ("grid", "workers", "base"):
            raise raw.error((key,), "unknown key")
    if "N" not in d:
        raise raw.error((), "missing required key N")
    n = _number(raw, ("N",), d["N"], int)
    if n < 2:
        raise raw.error(("N",), "need N >= 2")
    seed = _number(raw, ("seed",), d.get("seed", 0), int)

    orbits = _section(raw, d.get("orbits"), ("orbits",))
    angles = {}
    for k in ("S", "T"):
        vals = orbits.get(k, [1.0] * (n // 2))
        angles[k] = _number_list(raw, ("orbits", k), vals, n // 2)
        if any(a < 0 for a in angles[k]):
            raise raw.error(("orbits", k), "angles must be non-negative")

    spread = _section(raw, d.get("spread"), ("spread",))
    pos = _number(raw, ("spread", "position"), spread.get("position", 4.0))
    mom = _number(raw, ("spread", "momentum"), spread.get("momentum", 1.0))
    if pos <= 0 or mom <= 0:
        raise raw.error(("spread",), "spreads must be positive")
    angle_scale = _number(raw, ("angle_scale",), d.get("angle_scale", 1.0))

    integ = _section(raw, d.get("integrator"), ("integrator",))
    for key in integ:
        if key not in _INTEGRATOR_KEYS:
            raise raw.error(("integrator", key), "unknown key")
    kwargs = {}
    for key in ("t_end", "dt", "tol", "probe_z", "sep_min"):
        if key in integ:
            kwargs[key] = _number(raw, ("integrator", key), integ[key])
    for key in ("sample_stride", "max_rejections"):
        if key in integ:
            kwargs[key] = _number(raw, ("integrator", key), integ[key], int)
    if "method" in integ:
        if integ["method"] not in METHODS:
            raise raw.error(("integrator", "method"), f"must be one of {', '.join(METHODS)}")
        kwargs["method"] = integ["method"]
    if overrides:
        kwargs.update(overrides)
    try:
        icfg = IntegratorConfig(**kwargs)
    except ValueError as e:
        raise raw.error(("integrator",), str(e)) from None

    state = None
    if "state" in d:
        sd = _section(raw, d["state"], ("state",))
        try:
            state = State(
                n,
                _number_list(raw, ("state", "u"), sd.get("u"), n),
                _number_list(raw, ("state", "v"), sd.get("v"), n),
                _number_list(raw, ("state", "S_upper"), sd.get("S_upper"), n * (n - 1) // 2),
                _number_list(raw, ("state", "T_upper"), sd.get("T_upper"), n * (n - 1) // 2),
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise raw.error(("state",), str(e)) from None

    output = _section(raw, d.get("output"), ("output",))
    checks = d.get("checks") or []
    if not isinstance(checks, list):
        raise raw.error(("checks",), "expected a list of check names")
    return RunConfig(
        n=n,
        seed=seed,
        angles_S=tuple(angles["S"]),
        angles_T=tuple(angles["T"]),
        position_spread=pos,
        momentum_spread=mom,
        angle_scale=angle_scale,
        initial_state=state,
        integrator=icfg,
        out_dir=str(output.get("dir", "out")),
        name=str(output.get("name", "trajectory")),
        checks=tuple(str(c) for c in checks),
    )


# trajectory export -----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_header(n: int, invariant_names) -> list[str]:
    cols = ["t"]
    cols += [f"u_{i + 1}" for i in range(n)]
    cols += [f"v_{i + 1}" for i in range(n)]
    cols += [f"S_{i + 1}{j + 1}" for i, j in upper_pairs(n)]
    cols += [f"T_{i + 1}{j + 1}" for i, j in upper_pairs(n)]
    for name in invariant_names:
        cols += [name, f"drift_{name}"]
    cols += ["step", "error"]
    return cols


def trajectory_csv(tr: Trajectory) -> str:
    """CSV text; every float printed with its shortest round-trip repr."""
    names = tr.invariant_names()
    scales = invariant_scales(tr.states[0], tr.config.probe_z)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(tr.n, names))
    base = {k: tr.diagnostics[k][0] for k in names}
    for i, (t, s) in enumerate(zip(tr.times, tr.states)):
        row = [_fmt(t)] + [_fmt(x) for x in s.to_vector()]
        for k in names:
            val = tr.diagnostics[k][i]
            ref = scales[k] if scales[k] > 0 else 1.0
            row += [_fmt(val), _fmt((val - base[k]) / ref)]
        row += [_fmt(tr.diagnostics["step"][i]), _fmt(tr.diagnostics["error"][i])]
        w.writerow(row)
    return buf.getvalue()


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def states_from_csv(path) -> list[State]:
    header, data = read_trajectory_csv(path)
    n = sum(1 for h in header if h.startswith("u_"))
    width = 2 * n + n * (n - 1)
    return [State.from_vector(n, row[1:1 + width]) for row in data]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def summary_drifts(tr: Trajectory) -> dict:
    scales = invariant_scales(tr.states[0], tr.config.probe_z)
    return {k: relative_drift(tr.diagnostics[k], scales[k]) for k in tr.invariant_names()}
