"""One-step methods and the uniform-step integration driver.

Four explicit steppers are provided:

* ``RK2_MIDPOINT`` -- the explicit midpoint rule (2 evaluations/step),
* ``RK4``          -- the classical fourth-order method (4),
* ``RK6``          -- Luther's seven-stage sixth-order method (7),
* ``DC6RK24``      -- the midpoint rule corrected by finite-difference
  combinations of five RK4 substates, sixth-order accurate (21).

The step functions work on plain numpy arrays (any float/complex dtype) with
an arbitrary Python callable ``rhs(t, u) -> array``.  ``integrate`` marches a
problem over a uniform grid; when the problem's ``rhs`` can be compiled by
numba the whole march runs as native code, which is what makes the long
benchmark runs practical.  Both paths execute the same arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ivp import (
    DIVERGENCE_BOUND,
    ODE_SAMPLE_CAP,
    OdeProblem,
    RunStatus,
    TrajectoryRun,
    sample_indices,
)

__all__ = [
    "StepperKind",
    "DcStepWork",
    "midpoint_step",
    "rk4_step",
    "rk6_step",
    "dc6_step",
    "dc6_step_work",
    "step_once",
    "integrate",
]


class StepperKind(enum.Enum):
    RK2_MIDPOINT = "rk2"
    RK4 = "rk4"
    RK6 = "rk6"
    DC6RK24 = "dc6rk24"

    @property
    def evals_per_step(self) -> int:
        return _EVALS[self]

    @property
    def order(self) -> int:
        return {StepperKind.RK2_MIDPOINT: 2, StepperKind.RK4: 4,
                StepperKind.RK6: 6, StepperKind.DC6RK24: 6}[self]


_EVALS = {
    StepperKind.RK2_MIDPOINT: 2,
    StepperKind.RK4: 4,
    StepperKind.RK6: 7,
    StepperKind.DC6RK24: 21,
}

# Correction-stencil scale factors: exact integer ratios, rounded once.
A_SCALE = 125.0 / 384.0
B_SCALE = 25.0 / 768.0

# Luther's seven-stage tableau; every entry is a rational combination of
# sqrt(21) evaluated once in double precision.
_S21 = math.sqrt(21.0)
L_C5 = (7.0 - _S21) / 14.0
L_C6 = (7.0 + _S21) / 14.0
L_A51 = 3.0 * (3.0 * _S21 - 7.0) / 392.0
L_A52 = -8.0 * (7.0 - _S21) / 392.0
L_A53 = 48.0 * (7.0 - _S21) / 392.0
L_A54 = -3.0 * (21.0 - _S21) / 392.0
L_A61 = -5.0 * (231.0 + 51.0 * _S21) / 1960.0
L_A62 = -40.0 * (7.0 + _S21) / 1960.0
L_A63 = -320.0 * _S21 / 1960.0
L_A64 = 3.0 * (21.0 + 121.0 * _S21) / 1960.0
L_A65 = 392.0 * (6.0 + _S21) / 1960.0
L_A71 = 15.0 * (22.0 + 7.0 * _S21) / 180.0
L_A72 = 120.0 / 180.0
L_A73 = 40.0 * (7.0 * _S21 - 5.0) / 180.0
L_A74 = -63.0 * (3.0 * _S21 - 2.0) / 180.0
L_A75 = -14.0 * (49.0 + 9.0 * _S21) / 180.0
L_A76 = 70.0 * (7.0 - _S21) / 180.0


def _midpoint_core(rhs, t, u, k):
    return u + k * rhs(t + 0.5 * k, u + (0.5 * k) * rhs(t, u))


def _rk4_tail(rhs, t, u, k, f1):
    f2 = rhs(t + 0.5 * k, u + (0.5 * k) * f1)
    f3 = rhs(t + 0.5 * k, u + (0.5 * k) * f2)
    f4 = rhs(t + k, u + k * f3)
    return u + (k / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)


def _rk4_core(rhs, t, u, k):
    f1 = rhs(t, u)
    return _rk4_tail(rhs, t, u, k, f1), f1


def _rk6_core(rhs, t, u, k):
    f1 = rhs(t, u)
    f2 = rhs(t + k, u + k * f1)
    f3 = rhs(t + 0.5 * k, u + (k / 8.0) * (3.0 * f1 + f2))
    f4 = rhs(t + (2.0 / 3.0) * k, u + (k / 27.0) * (8.0 * f1 + 2.0 * f2 + 8.0 * f3))
    f5 = rhs(t + L_C5 * k,
             u + k * (L_A51 * f1 + L_A52 * f2 + L_A53 * f3 + L_A54 * f4))
    f6 = rhs(t + L_C6 * k,
             u + k * (L_A61 * f1 + L_A62 * f2 + L_A63 * f3 + L_A64 * f4 + L_A65 * f5))
    f7 = rhs(t + k,
             u + k * (L_A71 * f1 + L_A72 * f2 + L_A73 * f3 + L_A74 * f4
                      + L_A75 * f5 + L_A76 * f6))
    return u + (k / 180.0) * (9.0 * f1 + 64.0 * f3 + 49.0 * f5 + 49.0 * f6 + 9.0 * f7)


def _dc6_substates(rhs, t, u, k):
    """The first RHS value and the five RK4 substates at t + i*k/5."""
    h = 0.2 * k
    f0 = rhs(t, u)
    v1 = _rk4_tail(rhs, t, u, h, f0)
    v2, _ = _rk4_core(rhs, t + h, v1, h)
    v3, _ = _rk4_core(rhs, t + 2.0 * h, v2, h)
    v4, _ = _rk4_core(rhs, t + 3.0 * h, v3, h)
    v5, _ = _rk4_core(rhs, t + 4.0 * h, v4, h)
    return f0, v1, v2, v3, v4, v5


def _dc6_corrections(u, v1, v2, v3, v4, v5):
    # Anchoring the stencils on v3 is algebraically a no-op (both weight sets
    # sum to zero) but evaluates the small corrections at the scale of the
    # substate differences instead of the states, avoiding cancellation.
    d0 = u - v3
    d1 = v1 - v3
    d2 = v2 - v3
    d4 = v4 - v3
    d5 = v5 - v3
    a = A_SCALE * (-3.0 * d0 - d1 + 18.0 * d2 + d4 + 3.0 * d5)
    b = B_SCALE * (145.0 * d0 - 387.0 * d1 + 402.0 * d2 + 93.0 * d4 - 15.0 * d5)
    return a, b


def _dc6_core(rhs, t, u, k):
    f0, v1, v2, v3, v4, v5 = _dc6_substates(rhs, t, u, k)
    a, b = _dc6_corrections(u, v1, v2, v3, v4, v5)
    return u + a + k * rhs(t + 0.5 * k, u + (0.5 * k) * f0 + b)


def midpoint_step(rhs, t: float, u: np.ndarray, k: float) -> np.ndarray:
    """One explicit-midpoint step; 2 RHS evaluations."""
    return _midpoint_core(rhs, t, u, k)


def rk4_step(rhs, t: float, u: np.ndarray, k: float):
    """One classical RK4 step; returns (u_next, K1) so K1 can be reused.

    Exactly 4 RHS evaluations with nodes 0, 1/2, 1/2, 1.
    """
    return _rk4_core(rhs, t, u, k)


def rk6_step(rhs, t: float, u: np.ndarray, k: float) -> np.ndarray:
    """One step of Luther's seven-stage order-6 method; 7 RHS evaluations."""
    return _rk6_core(rhs, t, u, k)


def dc6_step(rhs, t: float, u: np.ndarray, k: float) -> np.ndarray:
    """One deferred-correction step; exactly 21 RHS evaluations.

    Five RK4 substeps of size k/5 supply the states entering the two
    correction stencils; the first substep's K1 doubles as the midpoint
    predictor's slope, which is what keeps the count at 21.
    """
    return _dc6_core(rhs, t, u, k)


@dataclass(frozen=True)
class DcStepWork:
    """Internals of one DC6RK24 step, exposed for stencil-level testing."""

    substep: float
    sub_states: tuple
    a: np.ndarray
    b: np.ndarray


def dc6_step_work(rhs, t: float, u: np.ndarray, k: float):
    """Like dc6_step but also returns the substates and correction terms."""
    f0, v1, v2, v3, v4, v5 = _dc6_substates(rhs, t, u, k)
    a, b = _dc6_corrections(u, v1, v2, v3, v4, v5)
    u_next = u + a + k * rhs(t + 0.5 * k, u + (0.5 * k) * f0 + b)
    work = DcStepWork(substep=0.2 * k, sub_states=(u, v1, v2, v3, v4, v5), a=a, b=b)
    return u_next, work


def step_once(kind: StepperKind, rhs, t: float, u: np.ndarray, k: float) -> np.ndarray:
    if kind is StepperKind.RK2_MIDPOINT:
        return _midpoint_core(rhs, t, u, k)
    if kind is StepperKind.RK4:
        return _rk4_core(rhs, t, u, k)[0]
    if kind is StepperKind.RK6:
        return _rk6_core(rhs, t, u, k)
    return _dc6_core(rhs, t, u, k)


# ---------------------------------------------------------------------------
# compiled march
# ---------------------------------------------------------------------------

_jit_cache: dict = {}
_driver_cache: dict = {}


def _get_numba():
    import numba
    return numba


def _compiled_rhs(rhs, t0: float, u0: np.ndarray):
    """numba-compile ``rhs`` (cached); None if it cannot be compiled."""
    if rhs in _jit_cache:
        return _jit_cache[rhs]
    try:
        nb = _get_numba()
        jitted = nb.njit(rhs)
        jitted(t0, u0.copy())  # force typing now so failures surface here
    except Exception:
        jitted = None
    _jit_cache[rhs] = jitted
    return jitted


def _build_drivers():
    """Compile one march loop per stepper kind (lazy, once per process)."""
    if _driver_cache:
        return _driver_cache
    nb = _get_numba()
    njit = nb.njit

    mid = njit(_midpoint_core)
    rk4_tail = njit(_rk4_tail)

    @njit
    def rk4(rhs, t, u, k):
        f1 = rhs(t, u)
        return rk4_tail(rhs, t, u, k, f1), f1

    rk6 = njit(_rk6_core)

    @njit
    def dc6(rhs, t, u, k):
        h = 0.2 * k
        f0 = rhs(t, u)
        v1 = rk4_tail(rhs, t, u, h, f0)
        v2, _ = rk4(rhs, t + h, v1, h)
        v3, _ = rk4(rhs, t + 2.0 * h, v2, h)
        v4, _ = rk4(rhs, t + 3.0 * h, v3, h)
        v5, _ = rk4(rhs, t + 4.0 * h, v4, h)
        d0 = u - v3
        d1 = v1 - v3
        d2 = v2 - v3
        d4 = v4 - v3
        d5 = v5 - v3
        a = A_SCALE * (-3.0 * d0 - d1 + 18.0 * d2 + d4 + 3.0 * d5)
        b = B_SCALE * (145.0 * d0 - 387.0 * d1 + 402.0 * d2 + 93.0 * d4 - 15.0 * d5)
        return u + a + k * rhs(t + 0.5 * k, u + (0.5 * k) * f0 + b)

    def make_march(stepper):
        @njit
        def march(rhs, u0, k, n_steps, sample_idx, bound):
            dim = u0.size
            n_samp = sample_idx.size
            samples = np.empty((n_samp, dim))
            u = u0.copy()
            samples[0] = u
            pos = 1
            for n in range(1, n_steps + 1):
                u = stepper(rhs, (n - 1) * k, u, k)
                ok = True
                for i in range(dim):
                    v = u[i]
                    if not np.isfinite(v) or abs(v) > bound:
                        ok = False
                        break
                if not ok:
                    return samples[:pos], n, False
                if pos < n_samp and sample_idx[pos] == n:
                    samples[pos] = u
                    pos += 1
            return samples, n_steps, True
        return march

    @njit
    def rk4_only(rhs, t, u, k):
        un, _ = rk4(rhs, t, u, k)
        return un

    _driver_cache[StepperKind.RK2_MIDPOINT] = make_march(mid)
    _driver_cache[StepperKind.RK4] = make_march(rk4_only)
    _driver_cache[StepperKind.RK6] = make_march(rk6)
    _driver_cache[StepperKind.DC6RK24] = make_march(dc6)
    return _driver_cache


def _march_python(kind, rhs, u0, k, n_steps, sample_idx, bound):
    # Step functions call the rhs a fixed number of times, so the eval count
    # is structural; tests verify it against externally counted calls.
    if kind is StepperKind.RK4:
        def stepper(t, u):
            return _rk4_core(rhs, t, u, k)[0]
    elif kind is StepperKind.RK2_MIDPOINT:
        def stepper(t, u):
            return _midpoint_core(rhs, t, u, k)
    elif kind is StepperKind.RK6:
        def stepper(t, u):
            return _rk6_core(rhs, t, u, k)
    else:
        def stepper(t, u):
            return _dc6_core(rhs, t, u, k)

    epe = kind.evals_per_step
    samples = np.empty((sample_idx.size, u0.size), dtype=u0.dtype)
    u = u0.copy()
    samples[0] = u
    pos = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_steps + 1):
            u = stepper((n - 1) * k, u)
            if not check_finite_fast(u, bound):
                return samples[:pos], n, False, n * epe
            if pos < sample_idx.size and sample_idx[pos] == n:
                samples[pos] = u
                pos += 1
    return samples, n_steps, True, n_steps * epe


def check_finite_fast(u: np.ndarray, bound: float) -> bool:
    if u.size <= 8:
        for v in u:
            if not (-bound <= v <= bound):  # NaN fails both comparisons
                return False
        return True
    m = np.abs(u)
    return bool(np.all(m <= bound))


def integrate(problem: OdeProblem, kind: StepperKind, n_steps: int,
              max_samples: int = ODE_SAMPLE_CAP,
              sample_at: Optional[np.ndarray] = None,
              compiled: Optional[bool] = None) -> TrajectoryRun:
    """March ``problem`` from 0 to t_end in ``n_steps`` uniform steps.

    States are recorded at ``sample_at`` (explicit step indices, must start
    at 0) or at ``sample_indices(n_steps, max_samples)``.  After every step
    the new state is checked against the divergence bound; on failure the
    run stops with status DIVERGED and the offending state is discarded.

    ``compiled=None`` uses the numba fast path when the problem's rhs is
    compilable and falls back to the Python steppers otherwise; True forces
    compilation (raising if impossible), False forces the Python path.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    k = problem.t_end / n_steps
    if sample_at is not None:
        idx = np.asarray(sample_at, dtype=np.int64)
        if idx[0] != 0 or np.any(np.diff(idx) <= 0) or idx[-1] > n_steps:
            raise ValueError("sample_at must be strictly increasing, start at 0 "
                             "and stay within [0, n_steps]")
    else:
        idx = sample_indices(n_steps, max_samples)

    u0 = np.asarray(problem.initial, dtype=float).copy()
    epe = kind.evals_per_step

    jitted = None
    if compiled is None or compiled:
        jitted = _compiled_rhs(problem.rhs, 0.0, u0)
        if jitted is None and compiled:
            raise TypeError(f"rhs of problem {problem.name!r} is not numba-compilable")

    if jitted is not None:
        march = _build_drivers()[kind]
        samples, last, ok = march(jitted, u0, k, n_steps, idx, DIVERGENCE_BOUND)
        calls = last * epe
    else:
        samples, last, ok, calls = _march_python(kind, problem.rhs, u0, k,
                                                 n_steps, idx, DIVERGENCE_BOUND)

    n_stored = samples.shape[0]
    times = idx[:n_stored] * k
    if ok:
        return TrajectoryRun(step=k, n_steps=n_steps, sample_times=times,
                             sample_states=samples, rhs_evals=calls,
                             status=RunStatus.COMPLETED)
    return TrajectoryRun(step=k, n_steps=n_steps, sample_times=times,
                         sample_states=samples, rhs_evals=calls,
                         status=RunStatus.DIVERGED, diverged_at=last)
