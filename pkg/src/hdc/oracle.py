"""Self-contained reference trajectories by step-halving self-convergence.

For problems without a closed-form solution the reference is the integrator
itself run at N, 2N, 4N, ... uniform steps until two consecutive runs agree
(max Euclidean difference over the sample times) to the requested tolerance.
Coarse-step table runs are then compared against a reference many times
finer, where the generator's own error is provably subdominant.

References persist in a small binary cache; see ``cache_store`` for the
layout.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ivp import OdeProblem, RunStatus
from .steppers import StepperKind, integrate

__all__ = [
    "ReferenceTrajectory",
    "OracleDiverged",
    "OracleBudgetExhausted",
    "reference_trajectory",
    "cache_store",
    "cache_load",
    "cache_path",
    "CACHE_ENV_VAR",
]

CACHE_ENV_VAR = "HDC_REF_CACHE"
_MAGIC = b"HDC1"

_GENERATOR_TAGS = {kind: i for i, kind in enumerate(StepperKind)}
_GENERATOR_FROM_TAG = {i: kind for kind, i in _GENERATOR_TAGS.items()}


class OracleDiverged(Exception):
    """The starting step count is unstable for this problem; raise it."""


class OracleBudgetExhausted(Exception):
    """Step budget ran out before two runs agreed; carries the best result."""

    def __init__(self, best: "ReferenceTrajectory"):
        super().__init__(
            f"step budget exhausted at agreement {best.agreement:.3e}")
        self.best = best


@dataclass(frozen=True)
class ReferenceTrajectory:
    problem_id: str
    sample_times: np.ndarray
    states: np.ndarray
    agreement: float
    generator: StepperKind
    n_steps_finest: int


def reference_trajectory(problem: OdeProblem, problem_id: str, n_start: int,
                         tol: float, n_samples: int = 100,
                         kind: StepperKind = StepperKind.DC6RK24,
                         max_total_steps: int = 10 ** 9) -> ReferenceTrajectory:
    """Reference states at n_samples+1 evenly spaced times on [0, t_end].

    ``n_samples`` must divide ``n_start`` so every refinement lands on the
    same sample times without interpolation.  Runs n_start, 2*n_start, ...
    until consecutive runs agree to ``tol`` or the step budget is exhausted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n_start % n_samples != 0:
        raise ValueError(f"n_samples={n_samples} must divide n_start={n_start}")

    n = n_start
    spent = 0
    prev = None
    best = None
    while spent + n <= max_total_steps or prev is None:
        idx = np.arange(0, n + 1, n // n_samples, dtype=np.int64)
        run = integrate(problem, kind, n, sample_at=idx)
        spent += n
        if run.status is RunStatus.DIVERGED:
            raise OracleDiverged(
                f"{problem.name}: diverged at step {run.diverged_at} of {n}")
        if prev is not None:
            diff = run.sample_states - prev.sample_states
            agreement = float(np.sqrt((diff * diff).sum(axis=1)).max())
            best = ReferenceTrajectory(
                problem_id=problem_id, sample_times=run.sample_times,
                states=run.sample_states, agreement=agreement,
                generator=kind, n_steps_finest=n)
            if agreement <= tol:
                return best
        prev = run
        n *= 2
    if best is None:
        raise ValueError("max_total_steps cannot cover two runs; raise the budget")
    raise OracleBudgetExhausted(best)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

_fnv_jit = None


def _fnv1a64_py(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _fnv1a64(data: bytes) -> int:
    global _fnv_jit
    if len(data) < 4096:
        return _fnv1a64_py(data)
    if _fnv_jit is None:
        try:
            import numba

            @numba.njit(cache=True)
            def fnv(arr):
                h = numba.uint64(0xCBF29CE484222325)
                prime = numba.uint64(0x100000001B3)
                for i in range(arr.size):
                    h = numba.uint64(h ^ numba.uint64(arr[i]))
                    h = numba.uint64(h * prime)
                return h

            _fnv_jit = fnv
        except Exception:
            _fnv_jit = _fnv1a64_py
    if _fnv_jit is _fnv1a64_py:
        return _fnv1a64_py(data)
    return int(_fnv_jit(np.frombuffer(data, dtype=np.uint8)))


def cache_path(problem_id: str, directory: os.PathLike | str) -> Path:
    return Path(directory) / f"{problem_id}.ref"


def cache_store(ref: ReferenceTrajectory, directory: os.PathLike | str) -> Path:
    """Write a reference to ``<directory>/<problem_id>.ref`` atomically.

    Layout (little-endian): magic ``HDC1``; u64 dimension; u64 sample count;
    u64 id length + UTF-8 problem id; f64 agreement; u64 finest step count;
    u64 generator tag; raw f64 sample times then states row-major; trailing
    u64 FNV-1a checksum of all preceding bytes.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dim = ref.states.shape[1]
    count = ref.states.shape[0]
    ident = ref.problem_id.encode("utf-8")
    body = bytearray()
    body += _MAGIC
    body += struct.pack("<QQ", dim, count)
    body += struct.pack("<Q", len(ident)) + ident
    body += struct.pack("<dQQ", ref.agreement, ref.n_steps_finest,
                        _GENERATOR_TAGS[ref.generator])
    body += np.ascontiguousarray(ref.sample_times, dtype="<f8").tobytes()
    body += np.ascontiguousarray(ref.states, dtype="<f8").tobytes()
    body += struct.pack("<Q", _fnv1a64(bytes(body)))

    path = cache_path(ref.problem_id, directory)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(bytes(body))
    os.replace(tmp, path)
    return path


def cache_load(problem_id: str, directory: os.PathLike | str) -> Optional[ReferenceTrajectory]:
    """Load a cached reference; None on miss, wrong id or corruption."""
    path = cache_path(problem_id, directory)
    try:
        raw = path.read_bytes()
    except OSError:
        return None
    try:
        if raw[:4] != _MAGIC:
            return None
        (stored_sum,) = struct.unpack("<Q", raw[-8:])
        if _fnv1a64(raw[:-8]) != stored_sum:
            return None
        off = 4
        dim, count = struct.unpack_from("<QQ", raw, off)
        off += 16
        (id_len,) = struct.unpack_from("<Q", raw, off)
        off += 8
        ident = raw[off:off + id_len].decode("utf-8")
        off += id_len
        if ident != problem_id:
            return None
        agreement, n_finest, tag = struct.unpack_from("<dQQ", raw, off)
        off += 24
        times = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        states = np.frombuffer(raw, dtype="<f8", count=count * dim,
                               offset=off).reshape(count, dim).copy()
        off += 8 * count * dim
        if off != len(raw) - 8:
            return None
        return ReferenceTrajectory(problem_id=ident, sample_times=times,
                                   states=states, agreement=agreement,
                                   generator=_GENERATOR_FROM_TAG[int(tag)],
                                   n_steps_finest=int(n_finest))
    except (struct.error, KeyError, ValueError, UnicodeDecodeError):
        return None


def resolve_cache_dir(explicit: Optional[str]) -> Optional[Path]:
    """Cache directory from an explicit flag or the HDC_REF_CACHE variable."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else None


def cached_reference(problem: OdeProblem, problem_id: str, n_start: int, tol: float,
                     n_samples: int = 100, kind: StepperKind = StepperKind.DC6RK24,
                     cache_dir: Optional[os.PathLike | str] = None,
                     max_total_steps: int = 10 ** 9) -> ReferenceTrajectory:
    """reference_trajectory with read-through caching when a dir is given."""
    if cache_dir is not None:
        hit = cache_load(problem_id, cache_dir)
        if hit is not None and hit.agreement <= tol:
            return hit
    ref = reference_trajectory(problem, problem_id, n_start, tol,
                               n_samples=n_samples, kind=kind,
                               max_total_steps=max_total_steps)
    if cache_dir is not None:
        cache_store(ref, cache_dir)
    return ref
