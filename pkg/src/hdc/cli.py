"""Batch experiment runner: convergence tables, stability metrics, PDE tables.

Configuration comes from flags, optionally merged over a JSON document
(``--config``); flags win.  Exit codes: 0 success, 2 partial (a requested
table cell diverged; the table is still written), 64 usage error, 74 I/O
error.  CSV outputs are byte-deterministic for a fixed configuration;
wall-clock timings go to a separate summary file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ivp, oracle, pde, problems, stability
from .ivp import PDE_SAMPLE_CAP, ODE_SAMPLE_CAP, RunStatus, build_records
from .steppers import StepperKind, integrate

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_IO = 74

_METHOD_NAMES = {
    "rk2": StepperKind.RK2_MIDPOINT,
    "midpoint": StepperKind.RK2_MIDPOINT,
    "rk4": StepperKind.RK4,
    "rk6": StepperKind.RK6,
    "dc6rk24": StepperKind.DC6RK24,
    "dc6": StepperKind.DC6RK24,
}


class UsageError(Exception):
    pass


def _parse_methods(spec: str) -> list[StepperKind]:
    out = []
    for name in spec.split(","):
        name = name.strip().lower()
        if not name:
            continue
        if name not in _METHOD_NAMES:
            raise UsageError(f"unknown method {name!r}; known: {sorted(set(_METHOD_NAMES))}")
        kind = _METHOD_NAMES[name]
        if kind not in out:
            out.append(kind)
    if not out:
        raise UsageError("no methods requested")
    return out


def _parse_params(pairs: Sequence[str]) -> dict:
    params = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise UsageError(f"--param expects name=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            params[key] = float(value)
        except ValueError as exc:
            raise UsageError(f"parameter value {value!r} is not a number") from exc
    return params


def _parse_steps(spec: str, integer: bool) -> list:
    try:
        vals = [int(s) if integer else float(s) for s in spec.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad steps list {spec!r}") from exc
    if not vals:
        raise UsageError("empty steps list")
    if integer:
        if any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise UsageError("step counts must be positive and strictly increasing")
    else:
        if any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
            raise UsageError("step sizes must be positive and strictly decreasing")
    return vals


def _method_label(kind: StepperKind) -> str:
    return {StepperKind.RK2_MIDPOINT: "rk2", StepperKind.RK4: "rk4",
            StepperKind.RK6: "rk6", StepperKind.DC6RK24: "dc6rk24"}[kind]


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------


def run_convergence(cfg: dict) -> int:
    problem_name = cfg["problem"]
    prob = problems.get_problem(problem_name, cfg.get("params"))
    methods = cfg["methods"]
    ks = cfg["steps"]
    out_dir = Path(cfg["output"])
    fmt = cfg.get("format", "csv")
    if prob.exact is None:
        ref = _ode_reference(prob, cfg, ks)
    else:
        ref = None

    any_diverged = False
    summary = {"command": "convergence", "problem": problem_name, "cells": []}
    for kind in methods:
        errors = []
        for k in ks:
            n = round(prob.t_end / k)
            if abs(n * k - prob.t_end) > 1e-9 * prob.t_end:
                print(f"note: k={k} does not divide T={prob.t_end}; using N={n}",
                      file=sys.stderr)
            t0 = time.perf_counter()
            if ref is not None:
                idx = _common_sample_indices(n, ref)
                run = integrate(prob, kind, n, sample_at=idx)
            else:
                run = integrate(prob, kind, n, max_samples=ODE_SAMPLE_CAP)
            wall = time.perf_counter() - t0
            if run.status is RunStatus.DIVERGED:
                errors.append(None)
                any_diverged = True
                cell_err = None
            else:
                if ref is not None:
                    err = np.abs(run.sample_states - ref.states).max(axis=0)
                else:
                    err = ivp.max_abs_error(run, prob.exact)
                errors.append(err)
                cell_err = [float(e) for e in err]
            summary["cells"].append({
                "method": _method_label(kind), "k": k, "n_steps": n,
                "rhs_evals": run.rhs_evals, "wall_seconds": wall,
                "status": run.status.value, "error": cell_err,
            })
        records = build_records(ks, errors)
        stem = out_dir / f"{problem_name}_{_method_label(kind)}"
        if fmt in ("csv", "both"):
            _write(stem.with_suffix(".csv"), ivp.records_to_csv(records))
        if fmt in ("markdown", "both"):
            _write(stem.with_suffix(".md"), ivp.records_to_markdown(
                records, title=f"{problem_name} / {_method_label(kind)}"))
    _write(out_dir / "summary.json", json.dumps(summary, indent=2))
    return EXIT_PARTIAL if any_diverged else EXIT_OK


def _common_sample_indices(n: int, ref: oracle.ReferenceTrajectory) -> np.ndarray:
    n_samples = len(ref.sample_times) - 1
    if n % n_samples != 0:
        raise UsageError(
            f"step count {n} is not a multiple of the reference sampling {n_samples}")
    return np.arange(0, n + 1, n // n_samples, dtype=np.int64)


def _ode_reference(prob, cfg, ks) -> oracle.ReferenceTrajectory:
    n_finest = round(prob.t_end / min(ks))
    n_samples = int(cfg.get("ref_samples", 100))
    n_start = int(cfg.get("ref_n_start", 2 * n_finest))
    n_start = max(n_start, n_samples)
    n_start += (-n_start) % n_samples  # round up to a multiple
    tol = float(cfg.get("ref_tol", 1e-10))
    cache_dir = oracle.resolve_cache_dir(cfg.get("ref_cache"))
    pid = problems.problem_id(prob)
    return oracle.cached_reference(prob, pid, n_start, tol,
                                   n_samples=n_samples, cache_dir=cache_dir)


def run_stability(cfg: dict) -> int:
    out_dir = Path(cfg["output"])
    methods = cfg["methods"]
    re_range = tuple(cfg.get("re_range", (-6.0, 1.0)))
    im_range = tuple(cfg.get("im_range", (-5.0, 5.0)))
    nx = int(cfg.get("nx", 701))
    ny = int(cfg.get("ny", 1001))

    metrics = []
    t0 = time.perf_counter()
    for kind in methods:
        poly = stability.expand_coefficients(kind)
        raster = stability.stability_raster(poly, re_range, im_range, nx, ny)
        label = _method_label(kind)
        try:
            (out_dir / f"{label}.pgm").parent.mkdir(parents=True, exist_ok=True)
            (out_dir / f"{label}.pgm").write_bytes(stability.raster_to_pgm(raster))
        except OSError as exc:
            raise IOError(str(exc)) from exc
        _write(out_dir / f"{label}_boundary.csv", stability.boundary_csv(raster))
        xb = stability.real_axis_boundary(poly)
        ye = stability.imaginary_extent(poly)
        metrics.append((label, xb, ye))
    _write(out_dir / "metrics.csv", stability.metrics_csv(metrics))

    violations = stability.containment_check(
        stability.expand_coefficients(StepperKind.RK6),
        stability.expand_coefficients(StepperKind.DC6RK24),
        re_range, im_range, nx, ny)
    lines = ["re,im"] + [f"{z.real!r},{z.imag!r}" for z in violations]
    _write(out_dir / "containment_rk6_in_dc6rk24.csv", "\n".join(lines) + "\n")
    summary = {
        "command": "stability",
        "metrics": [{"method": m, "real_boundary": xb, "imag_extent": ye}
                    for m, xb, ye in metrics],
        "rk6_region_inside_dc6rk24": not violations,
        "violation_count": len(violations),
        "wall_seconds": time.perf_counter() - t0,
    }
    _write(out_dir / "summary.json", json.dumps(summary, indent=2))
    return EXIT_OK


def run_pde(cfg: dict) -> int:
    name = cfg["problem"]
    rd = pde.get_pde_problem(name, M=cfg.get("m_grid"), params=cfg.get("params"))
    prob = rd.as_ode
    methods = cfg["methods"]
    ns = cfg["steps"]
    out_dir = Path(cfg["output"])
    fmt = cfg.get("format", "csv")

    n_samples = PDE_SAMPLE_CAP
    ref = None
    if rd.exact_state is None:
        tol = float(cfg.get("ref_tol", rd.ref_tol))
        n_start = int(cfg.get("ref_n_start", rd.ref_n_start or 4 * max(ns)))
        cache_dir = oracle.resolve_cache_dir(cfg.get("ref_cache"))
        pid = problems.problem_id(prob)
        ref = oracle.cached_reference(prob, pid, n_start, tol,
                                      n_samples=n_samples, cache_dir=cache_dir)

    any_diverged = False
    summary = {"command": "pde", "problem": name, "M": rd.M, "cells": []}
    snapshot_times = cfg.get("snapshots") or []
    for kind in methods:
        errors = []
        for n in ns:
            if n % n_samples != 0:
                raise UsageError(f"N={n} must be a multiple of {n_samples} "
                                 "so sample times align across runs")
            idx = np.arange(0, n + 1, n // n_samples, dtype=np.int64)
            t0 = time.perf_counter()
            run = integrate(prob, kind, n, sample_at=idx)
            wall = time.perf_counter() - t0
            if run.status is RunStatus.DIVERGED:
                errors.append(None)
                any_diverged = True
                cell = None
            else:
                cell = []
                nb = rd.block
                per_species = []
                if ref is not None:
                    target = ref.states
                else:
                    target = np.array([rd.exact_state(t) for t in run.sample_times])
                for sp in range(rd.species):
                    diff = (run.sample_states[:, sp * nb:(sp + 1) * nb]
                            - target[:, sp * nb:(sp + 1) * nb])
                    per_species.append(float(np.sqrt((diff * diff).sum(axis=1)).max()))
                errors.append(np.array(per_species))
                cell = per_species
                if kind is methods[0] and n == max(ns) and snapshot_times:
                    _emit_snapshots(rd, run, snapshot_times, out_dir)
            summary["cells"].append({
                "method": _method_label(kind), "n_steps": n,
                "rhs_evals": run.rhs_evals, "wall_seconds": wall,
                "status": run.status.value, "error": cell,
            })
        ksteps = [prob.t_end / n for n in ns]
        records = build_records(ksteps, errors)
        stem = out_dir / f"{name}_{_method_label(kind)}"
        if fmt in ("csv", "both"):
            _write(stem.with_suffix(".csv"), ivp.records_to_csv(records))
        if fmt in ("markdown", "both"):
            _write(stem.with_suffix(".md"), ivp.records_to_markdown(
                records, title=f"{name} (M={rd.M}) / {_method_label(kind)}"))
    _write(out_dir / "summary.json", json.dumps(summary, indent=2))
    return EXIT_PARTIAL if any_diverged else EXIT_OK


def _emit_snapshots(rd, run, times, out_dir: Path):
    for t_req in times:
        i = int(np.argmin(np.abs(run.sample_times - t_req)))
        t = run.sample_times[i]
        for sp in range(rd.species):
            text = pde.snapshot_csv(rd, run.sample_states[i], species=sp, t=t)
            suffix = f"_s{sp + 1}" if rd.species > 1 else ""
            _write(out_dir / f"{rd.name}_t{t_req:g}{suffix}.csv", text)


def run_solve(cfg: dict) -> int:
    problem_name = cfg["problem"]
    if problem_name in pde.PDE_PROBLEMS:
        rd = pde.get_pde_problem(problem_name, M=cfg.get("m_grid"),
                                 params=cfg.get("params"))
        prob = rd.as_ode
    else:
        prob = problems.get_problem(problem_name, cfg.get("params"))
    methods = cfg["methods"]
    if len(methods) != 1 or len(cfg["steps"]) != 1:
        raise UsageError("solve takes exactly one method and one step value")
    kind = methods[0]
    step = cfg["steps"][0]
    n = int(step) if cfg.get("steps_are_counts") else round(prob.t_end / step)
    out_dir = Path(cfg["output"])

    t0 = time.perf_counter()
    run = integrate(prob, kind, n, max_samples=int(cfg.get("max_samples", ODE_SAMPLE_CAP)))
    wall = time.perf_counter() - t0

    lines = ["t," + ",".join(f"u{i + 1}" for i in range(prob.dim))]
    for t, state in zip(run.sample_times, run.sample_states):
        lines.append(f"{float(t)!r}," + ",".join(repr(float(v)) for v in state))
    _write(out_dir / f"{problem_name}_{_method_label(kind)}_trajectory.csv",
           "\n".join(lines) + "\n")
    summary = {
        "command": "solve", "problem": problem_name,
        "method": _method_label(kind), "n_steps": n, "k": prob.t_end / n,
        "status": run.status.value, "diverged_at": run.diverged_at,
        "rhs_evals": run.rhs_evals, "wall_seconds": wall,
    }
    _write(out_dir / "summary.json", json.dumps(summary, indent=2))
    return EXIT_OK if run.status is RunStatus.COMPLETED else EXIT_PARTIAL


def run_list() -> int:
    print("ODE problems: " + ", ".join(sorted(problems.PROBLEMS)))
    print("PDE problems: " + ", ".join(pde.PDE_PROBLEMS))
    print("methods: rk2 (midpoint), rk4, rk6, dc6rk24")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdc",
                                description="hybrid deferred-correction experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, steps_help):
        sp.add_argument("--config", help="JSON file with defaults for this command")
        sp.add_argument("--problem")
        sp.add_argument("--methods", help="comma-separated; e.g. rk4,rk6,dc6rk24")
        sp.add_argument("--steps", help=steps_help)
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--format", choices=("csv", "markdown", "both"))
        sp.add_argument("--param", action="append", default=None,
                        help="problem parameter override name=value (repeatable)")
        sp.add_argument("--ref-tol", type=float, dest="ref_tol")
        sp.add_argument("--ref-n-start", type=int, dest="ref_n_start")
        sp.add_argument("--ref-cache", dest="ref_cache",
                        help=f"reference cache dir (or ${oracle.CACHE_ENV_VAR})")

    sp = sub.add_parser("convergence", help="error/order table for an ODE problem")
    common(sp, "comma-separated step sizes k, strictly decreasing")

    sp = sub.add_parser("pde", help="error/order table for a PDE problem")
    common(sp, "comma-separated step counts N, strictly increasing")
    sp.add_argument("--grid-m", type=int, dest="m_grid", help="spatial cells M")
    sp.add_argument("--snapshots", help="comma-separated times for grid CSVs")

    sp = sub.add_parser("stability", help="rasters, boundary metrics, containment")
    sp.add_argument("--config")
    sp.add_argument("--methods", default="rk4,rk6,dc6rk24")
    sp.add_argument("--output")
    sp.add_argument("--re-range", default=None, help="min,max (default -6,1)")
    sp.add_argument("--im-range", default=None, help="min,max (default -5,5)")
    sp.add_argument("--nx", type=int, default=None)
    sp.add_argument("--ny", type=int, default=None)

    sp = sub.add_parser("solve", help="write one sampled trajectory")
    common(sp, "single step size k (or count with --n-steps)")
    sp.add_argument("--n-steps", type=int, dest="n_steps",
                    help="step count N (alternative to --steps)")
    sp.add_argument("--grid-m", type=int, dest="m_grid")
    sp.add_argument("--max-samples", type=int, dest="max_samples")

    sub.add_parser("list", help="list problems and methods")
    return p


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except OSError as exc:
            raise IOError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad JSON config: {exc}") from exc
    for key in ("problem", "methods", "steps", "output", "format", "ref_tol",
                "ref_n_start", "ref_cache", "m_grid", "snapshots", "nx", "ny",
                "max_samples"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "param", None):
        cfg.setdefault("params", {}).update(_parse_params(args.param))
    if getattr(args, "re_range", None):
        cfg["re_range"] = [float(v) for v in args.re_range.split(",")]
    if getattr(args, "im_range", None):
        cfg["im_range"] = [float(v) for v in args.im_range.split(",")]
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return run_list()
        cfg = _merge_config(args)
        if "output" not in cfg:
            raise UsageError("--output is required")
        if args.command == "stability":
            cfg["methods"] = _parse_methods(cfg.get("methods", "rk4,rk6,dc6rk24"))
            return run_stability(cfg)
        if "problem" not in cfg:
            raise UsageError("--problem is required")
        if "methods" not in cfg:
            raise UsageError("--methods is required")
        if isinstance(cfg["methods"], str):
            cfg["methods"] = _parse_methods(cfg["methods"])
        else:
            cfg["methods"] = [_METHOD_NAMES[m] for m in cfg["methods"]]

        if args.command == "solve" and getattr(args, "n_steps", None):
            cfg["steps"] = [args.n_steps]
            cfg["steps_are_counts"] = True
        elif "steps" not in cfg:
            raise UsageError("--steps is required")
        elif isinstance(cfg["steps"], str):
            integer = args.command == "pde"
            cfg["steps"] = _parse_steps(cfg["steps"], integer)
            cfg["steps_are_counts"] = integer
        if args.command == "pde" and isinstance(cfg.get("snapshots"), str):
            cfg["snapshots"] = [float(s) for s in cfg["snapshots"].split(",")]

        if args.command == "convergence":
            return run_convergence(cfg)
        if args.command == "pde":
            return run_pde(cfg)
        if args.command == "solve":
            return run_solve(cfg)
        raise UsageError(f"unknown command {args.command}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
