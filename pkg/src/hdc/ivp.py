"""Problem/trajectory data model, error norms and order-of-accuracy helpers.

Everything in this module is a pure function or an immutable value type;
instances can be shared freely across threads.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DIVERGENCE_BOUND",
    "ODE_SAMPLE_CAP",
    "PDE_SAMPLE_CAP",
    "OdeProblem",
    "RunStatus",
    "TrajectoryRun",
    "ConvergenceRecord",
    "sample_indices",
    "max_abs_error",
    "euclidean_error",
    "observed_order",
    "check_finite",
    "build_records",
    "records_to_csv",
    "records_from_csv",
    "records_to_markdown",
]

# Per-component magnitude beyond which a state counts as divergent.
DIVERGENCE_BOUND = 1e16

# Default caps on the number of stored sample times.
ODE_SAMPLE_CAP = 60_000
PDE_SAMPLE_CAP = 100


@dataclass(frozen=True)
class OdeProblem:
    """An autonomous-or-not initial value problem u' = rhs(t, u) on [0, t_end].

    ``rhs`` must be deterministic: the same ``(t, u)`` yields bit-identical
    output within a process.  ``exact``, when present, maps t to the true
    solution array and satisfies ``exact(0) == initial`` to roundoff.
    """

    name: str
    dim: int
    t_end: float
    initial: np.ndarray
    rhs: Callable[[float, np.ndarray], np.ndarray]
    exact: Optional[Callable[[float], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        initial = np.asarray(self.initial, dtype=float)
        if initial.shape != (self.dim,):
            raise ValueError(f"initial must have shape ({self.dim},)")
        initial = initial.copy()
        initial.setflags(write=False)
        object.__setattr__(self, "initial", initial)


class RunStatus(enum.Enum):
    COMPLETED = "completed"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class TrajectoryRun:
    """Sampled states from a uniform-step integration.

    ``sample_times`` always starts at 0 and is a subset of the step grid
    ``{n * step}``.  For a DIVERGED run the state that tripped the divergence
    check is *not* stored; ``diverged_at`` records the 1-based step index that
    produced it and every stored state is finite.
    """

    step: float
    n_steps: int
    sample_times: np.ndarray
    sample_states: np.ndarray
    rhs_evals: int
    status: RunStatus
    diverged_at: Optional[int] = None

    @property
    def completed(self) -> bool:
        return self.status is RunStatus.COMPLETED


def sample_indices(n_steps: int, max_samples: int) -> np.ndarray:
    """Evenly spread step indices in [0, n_steps], endpoints always included.

    Returns exactly ``min(n_steps + 1, max_samples)`` strictly increasing
    indices; index_j = round(j * n_steps / (S - 1)) with round-half-up done
    in integer arithmetic so huge step counts stay exact.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if max_samples < 2:
        raise ValueError("max_samples must be >= 2")
    s = min(n_steps + 1, max_samples)
    if s == n_steps + 1:
        return np.arange(n_steps + 1, dtype=np.int64)
    d = s - 1
    j = np.arange(s, dtype=np.int64)
    return (2 * j * n_steps + d) // (2 * d)


def check_finite(u: np.ndarray, bound: float = DIVERGENCE_BOUND) -> bool:
    """True iff every component is finite and no larger than ``bound``."""
    u = np.asarray(u)
    return bool(np.all(np.isfinite(u)) and np.all(np.abs(u) <= bound))


def max_abs_error(run: TrajectoryRun, exact: Callable[[float], np.ndarray]) -> np.ndarray:
    """Component-wise max of |state - exact(t)| over the stored sample times."""
    if not run.completed:
        raise ValueError("max_abs_error requires a COMPLETED run")
    err = np.zeros(run.sample_states.shape[1])
    for t, state in zip(run.sample_times, run.sample_states):
        err = np.maximum(err, np.abs(state - np.asarray(exact(t), dtype=float)))
    return err


def euclidean_error(run: TrajectoryRun, reference: np.ndarray,
                    reference_times: Optional[np.ndarray] = None) -> float:
    """Max over sample times of the Euclidean norm of (state - reference).

    ``reference`` must be sampled at exactly the run's sample times; pass
    ``reference_times`` to have that checked.
    """
    if not run.completed:
        raise ValueError("euclidean_error requires a COMPLETED run")
    reference = np.asarray(reference, dtype=float)
    if reference.shape != run.sample_states.shape:
        raise ValueError(
            f"reference shape {reference.shape} != run shape {run.sample_states.shape}")
    if reference_times is not None:
        if not np.array_equal(np.asarray(reference_times), run.sample_times):
            raise ValueError("reference sampled at different times than the run")
    diff = run.sample_states - reference
    return float(np.sqrt((diff * diff).sum(axis=1)).max())


def observed_order(e_coarse: float, k_coarse: float,
                   e_fine: float, k_fine: float) -> Optional[float]:
    """ln(e_coarse/e_fine) / ln(k_coarse/k_fine); None when undefined.

    Zero or negative errors carry no order information (they happen at the
    roundoff floor); such inputs yield None, rendered blank in tables.
    """
    if not (k_coarse > k_fine > 0):
        raise ValueError("need k_coarse > k_fine > 0")
    if e_coarse <= 0 or e_fine <= 0 or not (math.isfinite(e_coarse) and math.isfinite(e_fine)):
        return None
    return math.log(e_coarse / e_fine) / math.log(k_coarse / k_fine)


@dataclass(frozen=True)
class ConvergenceRecord:
    """One table row: step size, per-component errors, orders vs the previous row."""

    step: float
    errors: Optional[np.ndarray]
    orders: Optional[Sequence[Optional[float]]] = None
    diverged: bool = False


def build_records(steps: Sequence[float],
                  errors: Sequence[Optional[np.ndarray]]) -> list[ConvergenceRecord]:
    """Assemble rows and fill in pairwise orders between consecutive steps.

    ``errors[i] is None`` marks a diverged run (rendered as dashes).
    """
    if len(steps) != len(errors):
        raise ValueError("steps and errors must have equal length")
    records = []
    for i, (k, err) in enumerate(zip(steps, errors)):
        if err is None:
            records.append(ConvergenceRecord(step=k, errors=None, diverged=True))
            continue
        err = np.asarray(err, dtype=float)
        orders = None
        if i > 0 and not records[-1].diverged and records[-1].errors is not None:
            prev = records[-1]
            orders = tuple(
                observed_order(pe, prev.step, e, k)
                for pe, e in zip(prev.errors, err)
            )
        records.append(ConvergenceRecord(step=k, errors=err, orders=orders))
    return records


def _fmt_error(e: float) -> str:
    return f"{e:.2e}"


def records_to_csv(records: Sequence[ConvergenceRecord]) -> str:
    """CSV with header ``k,component,error,order,diverged``, full precision."""
    buf = io.StringIO()
    buf.write("k,component,error,order,diverged\n")
    for rec in records:
        if rec.diverged:
            buf.write(f"{float(rec.step)!r},,,,true\n")
            continue
        for i, e in enumerate(rec.errors):
            order = rec.orders[i] if rec.orders is not None else None
            ostr = "" if order is None else repr(float(order))
            buf.write(f"{float(rec.step)!r},{i},{float(e)!r},{ostr},false\n")
    return buf.getvalue()


def records_from_csv(text: str) -> list[ConvergenceRecord]:
    """Inverse of records_to_csv; reconstructs values exactly."""
    lines = text.strip().splitlines()
    if not lines or lines[0] != "k,component,error,order,diverged":
        raise ValueError("not a convergence-record CSV")
    rows: dict[float, dict] = {}
    order_rows: dict[float, dict] = {}
    seq: list[float] = []
    for line in lines[1:]:
        k_s, comp, err, order, div = line.split(",")
        k = float(k_s)
        if k not in rows:
            rows[k] = {}
            order_rows[k] = {}
            seq.append(k)
        if div == "true":
            rows[k] = None
            continue
        rows[k][int(comp)] = float(err)
        order_rows[k][int(comp)] = float(order) if order else None
    records = []
    for k in seq:
        if rows[k] is None:
            records.append(ConvergenceRecord(step=k, errors=None, diverged=True))
            continue
        comps = sorted(rows[k])
        errors = np.array([rows[k][c] for c in comps])
        ords = [order_rows[k][c] for c in comps]
        orders = None if all(o is None for o in ords) else tuple(ords)
        records.append(ConvergenceRecord(step=k, errors=errors, orders=orders))
    return records


def records_to_markdown(records: Sequence[ConvergenceRecord], title: str = "") -> str:
    """Markdown table in the ``error (order)`` style, 3 significant digits."""
    ncomp = max((len(r.errors) for r in records if r.errors is not None), default=1)
    buf = io.StringIO()
    if title:
        buf.write(f"### {title}\n\n")
    head = "| k | " + " | ".join(f"component {i+1}" for i in range(ncomp)) + " |\n"
    buf.write(head)
    buf.write("|---" * (ncomp + 1) + "|\n")
    for rec in records:
        if rec.diverged:
            cells = ["--"] * ncomp
        else:
            cells = []
            for i, e in enumerate(rec.errors):
                cell = _fmt_error(e)
                if rec.orders is not None and rec.orders[i] is not None:
                    cell += f" ({rec.orders[i]:.2f})"
                cells.append(cell)
            cells += [""] * (ncomp - len(cells))
        buf.write(f"| {rec.step:.3e} | " + " | ".join(cells) + " |\n")
    return buf.getvalue()
