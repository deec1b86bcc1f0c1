"""Command-line entry point: ``twospin simulate | verify | scan``.

Exit codes
----------
0  success (all checks passed, trajectory written)
1  one or more verification checks failed, or a scan point failed
2  usage error: bad flags, unreadable or malformed config, unknown check, empty grid
3  runtime abort: collision or step-size underflow during integration
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .integrator import CollisionError, StepSizeError, integrate
from .io import (
    ConfigError,
    RawConfig,
    build_run_config,
    load_config_file,
    summary_drifts,
    trajectory_csv,
    write_json,
)
from .phase_space import SeparationError
from .verify import CHECKS, run_checks

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _parse_int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise UsageError("empty N list")
    return vals


def _overrides(args) -> dict:
    return {"tol": args.tol} if getattr(args, "tol", None) is not None else {}


# simulate ----------------------------------------------------------------


def _simulate_point(cfg):
    """Integrate one RunConfig. Returns (trajectory, runtime)."""
    t0 = time.perf_counter()
    tr = integrate(cfg.initial(), cfg.integrator)
    return tr, time.perf_counter() - t0


def cmd_simulate(args) -> int:
    try:
        raw = load_config_file(args.config)
        cfg = build_run_config(raw, _overrides(args))
        s0 = cfg.initial()
        s0.check_separation(cfg.integrator.sep_min)
    except (ConfigError, SeparationError) as e:
        _err(str(e))
        return EXIT_USAGE
    except ValueError as e:
        _err(f"{args.config}: {e}")
        return EXIT_USAGE

    out_dir = Path(args.out or cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        _err(f"cannot create output directory {out_dir}: {e.strerror}")
        return EXIT_USAGE

    try:
        t0 = time.perf_counter()
        tr = integrate(s0, cfg.integrator)
        runtime = time.perf_counter() - t0
    except (CollisionError, StepSizeError) as e:
        _err(f"integration aborted: {e}")
        return EXIT_RUNTIME

    csv_path = out_dir / f"{cfg.name}.csv"
    csv_path.write_text(trajectory_csv(tr))
    drifts = summary_drifts(tr)
    meta = {
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "config_path": str(args.config),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "initial_state": s0.to_dict(),
        "samples": len(tr.times),
        "steps": tr.n_steps,
        "rejected": tr.n_rejected,
        "evaluations": tr.n_eval,
        "runtime_s": runtime,
        "invariants": {
            k: {"initial": float(tr.diagnostics[k][0]), "final": float(tr.diagnostics[k][-1]),
                "max_relative_drift": drifts[k]}
            for k in tr.invariant_names()
        },
    }
    write_json(out_dir / f"{cfg.name}.json", meta)

    print(f"wrote {csv_path} ({len(tr.times)} samples, {tr.n_steps} steps)")
    width = max(len(k) for k in drifts)
    for k, d in drifts.items():
        print(f"  drift {k:<{width}}  {d:.3e}")
    return EXIT_OK


# verify --------------------------------------------------------------------


def cmd_verify(args) -> int:
    names: list[str] = []
    n_list = None
    if args.config:
        try:
            cfg = build_run_config(load_config_file(args.config))
        except ConfigError as e:
            _err(str(e))
            return EXIT_USAGE
        names = list(cfg.checks)
        n_list = [cfg.n]
    if args.all:
        names = list(CHECKS)
    elif args.check:
        names = [c.strip() for c in args.check.split(",") if c.strip()]
    if not names:
        _err("select checks with --check NAME[,NAME...] or --all")
        return EXIT_USAGE
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        _err(f"unknown check(s): {', '.join(unknown)}; available: {', '.join(CHECKS)}")
        return EXIT_USAGE
    try:
        if args.N:
            n_list = _parse_int_list(args.N)
        n_list = n_list or [2, 3, 4, 5]
        if min(n_list) < 2:
            raise UsageError("N must be >= 2")
        if args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
    except UsageError as e:
        _err(str(e))
        return EXIT_USAGE

    tolerances = {c: args.tol for c in names} if args.tol is not None else None
    t0 = time.perf_counter()
    results = run_checks(names, n_list, list(range(args.seeds)), tolerances, workers=args.workers)
    elapsed = time.perf_counter() - t0

    lines = [r.to_json() for r in results]
    for line in lines:
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.jsonl").write_text("\n".join(lines) + "\n")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} passed in {elapsed:.1f} s", file=sys.stderr)
    return EXIT_OK if n_fail == 0 else EXIT_FAIL


# scan ------------------------------------------------------------------------


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ValueError(f"grid key {key!r} descends into a non-mapping")
    d[parts[-1]] = value


def expand_grid(raw: RawConfig) -> tuple[list[str], list[tuple]]:
    """Grid keys (in file order) and the Cartesian product of their values."""
    grid = raw.data.get("grid")
    if grid is None:
        raise raw.error(("grid",), "scan config needs a 'grid' mapping")
    if not isinstance(grid, dict):
        raise raw.error(("grid",), "expected a mapping of dotted keys to value lists")
    keys = list(grid)
    for k in keys:
        if not isinstance(grid[k], list):
            raise raw.error(("grid", k), "expected a list of values")
    points = list(itertools.product(*(grid[k] for k in keys))) if keys else []
    if not points:
        raise raw.error(("grid",), "grid is empty")
    return keys, points


def _scan_point(job):
    """Run one grid point in isolation; never raises."""
    index, raw, keys, values, overrides = job
    data = copy.deepcopy(raw.data)
    data.pop("grid", None)
    data.pop("workers", None)
    row = {"index": index, **{k: v for k, v in zip(keys, values)}}
    try:
        for k, v in zip(keys, values):
            _set_dotted(data, k, v)
        cfg = build_run_config(RawConfig(data, raw.source, raw.lines), overrides)
        tr, runtime = _simulate_point(cfg)
    except (CollisionError, StepSizeError) as e:
        return {**row, "status": f"abort: {e}"}, None
    except (ConfigError, ValueError) as e:
        return {**row, "status": f"config: {e}"}, None
    drifts = summary_drifts(tr)
    row.update(status="ok", steps=tr.n_steps, max_drift=max(drifts.values()))
    row.update({f"drift_{k}": d for k, d in drifts.items()})
    return row, runtime


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def cmd_scan(args) -> int:
    try:
        raw = load_config_file(args.config)
        keys, points = expand_grid(raw)
        build_run_config(RawConfig({k: v for k, v in raw.data.items() if k != "grid"},
                                   raw.source, raw.lines), _overrides(args))
    except ConfigError as e:
        _err(str(e))
        return EXIT_USAGE
    workers = args.workers or int(raw.data.get("workers", 1))
    out_dir = Path(args.out or raw.data.get("output", {}).get("dir", "out"))
    name = str(raw.data.get("output", {}).get("name", "scan"))
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(i, raw, keys, vals, _overrides(args)) for i, vals in enumerate(points)]
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            outcomes = list(ex.map(_scan_point, jobs))
    else:
        outcomes = [_scan_point(j) for j in jobs]
    elapsed = time.perf_counter() - t0

    rows = [r for r, _ in outcomes]
    drift_cols: list[str] = []
    for r in rows:
        drift_cols += [k for k in r if k.startswith("drift_") and k not in drift_cols]
    columns = ["index", *keys, "status", "steps", "max_drift", *drift_cols]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in columns])
    csv_path = out_dir / f"{name}.csv"
    csv_path.write_text(buf.getvalue())
    write_json(out_dir / f"{name}.json", {
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "config_path": str(args.config),
        "grid": {k: raw.data["grid"][k] for k in keys},
        "workers": workers,
        "runtime_s": elapsed,
        "point_runtime_s": [rt for _, rt in outcomes],
    })

    n_bad = sum(r["status"] != "ok" for r in rows)
    print(f"wrote {csv_path} ({len(rows)} points, {n_bad} failed, {elapsed:.1f} s)")
    return EXIT_OK if n_bad == 0 else EXIT_FAIL


# argument parsing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twospin", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate one trajectory from a config")
    sim.add_argument("--config", required=True, metavar="PATH")
    sim.add_argument("--out", metavar="DIR", help="override output.dir")
    sim.add_argument("--tol", type=float, help="override integrator.tol")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run identity checks on sampled states")
    group = ver.add_mutually_exclusive_group()
    group.add_argument("--check", metavar="NAME[,NAME...]")
    group.add_argument("--all", action="store_true")
    ver.add_argument("--config", metavar="PATH", help="take checks and N from a run config")
    ver.add_argument("--N", metavar="LIST", help="comma-separated particle counts (default 2,3,4,5)")
    ver.add_argument("--seeds", type=int, default=20, metavar="K", help="seeds 0..K-1 (default 20)")
    ver.add_argument("--tol", type=float, help="tolerance applied to every selected check")
    ver.add_argument("--out", metavar="DIR", help="also write verify.jsonl here")
    ver.add_argument("--workers", type=int, default=1)
    ver.set_defaults(func=cmd_verify)

    scan = sub.add_parser("scan", help="run trajectories over a parameter grid")
    scan.add_argument("--config", required=True, metavar="PATH")
    scan.add_argument("--out", metavar="DIR")
    scan.add_argument("--tol", type=float, help="override integrator.tol at every point")
    scan.add_argument("--workers", type=int, default=0, help="processes (default: config or 1)")
    scan.set_defaults(func=cmd_scan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help/--version and 2 for usage errors
        return int(e.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
