"""Sixth-order finite-difference semidiscretization of 1-D reaction-diffusion.

Equations of the form

    u_t - mu * u_xx + f(x, t, u) = 0   on [0, 1] x (0, T]

are discretized on a uniform grid with sixth-order operators that build the
boundary conditions into their first and last rows.  The Neumann matrix has
size (M+1)^2 and zero row sums; the Dirichlet matrix is its interior
submatrix of size (M-1)^2.  Applying a matrix costs O(M): three dense
boundary rows at each end plus the centered seven-point stencil
[-2, 27, -270, 490, -270, 27, -2] everywhere else.

Inhomogeneous boundary data is homogenized by subtracting a lift phi(x, t)
(linear in x for Dirichlet data, quadratic for Neumann data); its time
derivative and -mu*phi_xx join the reaction term.  The result of each
builder is an :class:`RdProblem` whose ``as_ode`` member plugs directly into
the steppers.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .ivp import OdeProblem

__all__ = [
    "BoundaryCondition",
    "Fd6Operator",
    "RdProblem",
    "neumann_matrix",
    "dirichlet_matrix",
    "apply_operator",
    "fisher_problem",
    "bistable_problem",
    "three_species_problem",
    "snapshot_csv",
    "PDE_PROBLEMS",
    "get_pde_problem",
]


class BoundaryCondition(enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


# The three special rows at the top of the Neumann matrix, exactly as exact
# rationals; every other row is the centered stencil, and the bottom three
# rows mirror the top via (i, j) -> (size-1-i, size-1-j).
_TOP_ROWS_EXACT = (
    (360, Fraction(-9958, 7), 6077, -15126, 21290, -18310, 9609, -2842, Fraction(2552, 7)),
    (-126, 70, 486, -855, 670, -324, 90, -11, 0),
    (11, -214, 378, -130, -85, 54, -16, 2, 0),
)
_STENCIL_EXACT = (-2, 27, -270, 490, -270, 27, -2)

_TOP_ROWS = np.array([[float(Fraction(v)) for v in row] for row in _TOP_ROWS_EXACT])
_STENCIL = np.array([float(v) for v in _STENCIL_EXACT])


@dataclass(frozen=True)
class Fd6Operator:
    """Banded sixth-order operator: (mu / (180 h^2)) * M where M ~ -180 h^2 d2/dx2."""

    size: int
    bc: BoundaryCondition
    h: float
    mu: float
    top_rows: np.ndarray
    stencil: np.ndarray

    @property
    def scale(self) -> float:
        return self.mu / (180.0 * self.h * self.h)

    def dense(self) -> np.ndarray:
        """Full matrix (for tests and small problems)."""
        n = self.size
        a = np.zeros((n, n))
        r_spec, w = self.top_rows.shape
        for r in range(r_spec):
            a[r, :w] = self.top_rows[r]
            a[n - 1 - r, n - w:] = self.top_rows[r][::-1]
        lo = r_spec if self.bc is BoundaryCondition.NEUMANN else 2
        for i in range(lo, n - lo):
            j0 = i - 3
            for j, c in enumerate(self.stencil):
                if 0 <= j0 + j < n:
                    a[i, j0 + j] = c
        return a


def neumann_matrix(M: int, h: Optional[float] = None, mu: float = 1.0) -> Fd6Operator:
    """The (M+1)x(M+1) operator for homogeneous Neumann data; rows sum to 0."""
    if M < 12:
        raise ValueError("M must be at least 12 so boundary stencils do not overlap")
    return Fd6Operator(size=M + 1, bc=BoundaryCondition.NEUMANN,
                       h=1.0 / M if h is None else h, mu=mu,
                       top_rows=_TOP_ROWS, stencil=_STENCIL)


def dirichlet_matrix(M: int, h: Optional[float] = None, mu: float = 1.0) -> Fd6Operator:
    """The (M-1)x(M-1) operator for homogeneous Dirichlet data.

    Equals the Neumann matrix with its first and last rows and columns
    removed: two special rows at each end, and clipped centered rows whose
    off-grid entries drop against the zero boundary values.
    """
    if M < 12:
        raise ValueError("M must be at least 12 so boundary stencils do not overlap")
    top = np.array([row[1:] for row in _TOP_ROWS[1:]])
    return Fd6Operator(size=M - 1, bc=BoundaryCondition.DIRICHLET,
                       h=1.0 / M if h is None else h, mu=mu,
                       top_rows=top, stencil=_STENCIL)


def apply_operator(op: Fd6Operator, u: np.ndarray) -> np.ndarray:
    """(mu / (180 h^2)) * (matrix @ u) in O(size) using the banded layout."""
    u = np.asarray(u, dtype=float)
    n = op.size
    if u.shape != (n,):
        raise ValueError(f"operand must have shape ({n},), got {u.shape}")
    out = np.empty(n)
    r_spec, w = op.top_rows.shape
    for r in range(r_spec):
        out[r] = op.top_rows[r] @ u[:w]
        out[n - 1 - r] = op.top_rows[r][::-1] @ u[n - w:]
    if op.bc is BoundaryCondition.NEUMANN:
        core = u
    else:
        core = np.concatenate((np.zeros(1), u, np.zeros(1)))  # ghost zeros
    s = op.stencil
    span = n - 2 * r_spec
    # The centered stencil has zero weight sum, so it can be applied to the
    # differences from each row's center value; that keeps the rounding at
    # the scale of the local variation instead of the state magnitude.
    center = core[3:3 + span]
    acc = np.zeros(span)
    for j, c in enumerate(s):
        acc += c * (core[j:j + span] - center)
    out[r_spec:n - r_spec] = acc
    return op.scale * out


@dataclass(frozen=True)
class RdProblem:
    """A semidiscretized reaction-diffusion problem.

    ``as_ode`` is the stacked method-of-lines system (species blocks
    concatenated); ``exact_state`` maps t to the exact stacked unknown when
    the underlying PDE solution is known in closed form.  ``ref_n_start`` and
    ``ref_tol`` are the recommended oracle settings for reference generation.
    """

    name: str
    M: int
    bc: BoundaryCondition
    species: int
    grid: np.ndarray
    as_ode: OdeProblem
    exact_state: Optional[Callable[[float], np.ndarray]] = None
    ref_n_start: Optional[int] = 4800
    ref_tol: float = 1e-12
    lift: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    @property
    def block(self) -> int:
        return self.as_ode.dim // self.species


# -- Fisher ------------------------------------------------------------------

def _fisher_u(x, t):
    return (1.0 + np.exp(x - 5.0 * t)) ** -2.0


def fisher_problem(M: int, bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
                   t_end: float = 10.0) -> RdProblem:
    """u_t - u_xx - 6u(1-u) = 0 on [0,1], exact solution (1 + e^(x-5t))^-2.

    Boundary data comes from the exact solution and is inhomogeneous, so the
    unknown is u - phi with a linear (Dirichlet) or quadratic (Neumann) lift;
    phi_t and -mu*phi_xx fold into the reaction term analytically.
    """
    h = 1.0 / M
    if bc is BoundaryCondition.DIRICHLET:
        x = np.linspace(0.0, 1.0, M + 1)[1:-1]
        op = dirichlet_matrix(M, h=h, mu=1.0)
    else:
        x = np.linspace(0.0, 1.0, M + 1)
        op = neumann_matrix(M, h=h, mu=1.0)
    scale = op.scale
    top = op.top_rows
    sten = op.stencil
    dirichlet = bc is BoundaryCondition.DIRICHLET
    n = op.size

    def lift(xv, t):
        if dirichlet:
            g0 = (1.0 + math.exp(-5.0 * t)) ** -2.0
            g1 = (1.0 + math.exp(1.0 - 5.0 * t)) ** -2.0
            return (1.0 - xv) * g0 + xv * g1
        e0 = math.exp(-5.0 * t)
        e1 = math.exp(1.0 - 5.0 * t)
        g0 = -2.0 * e0 * (1.0 + e0) ** -3.0
        g1 = -2.0 * e1 * (1.0 + e1) ** -3.0
        return (xv - 0.5 * xv * xv) * g0 + (0.5 * xv * xv) * g1

    def rhs(t, v):
        out = np.empty(n)
        r_spec = 3 if not dirichlet else 2
        w = 9 if not dirichlet else 8
        for r in range(r_spec):
            s_top = 0.0
            s_bot = 0.0
            for c in range(w):
                s_top += top[r, c] * v[c]
                s_bot += top[r, w - 1 - c] * v[n - w + c]
            out[r] = s_top
            out[n - 1 - r] = s_bot
        if dirichlet:
            for i in range(2, n - 2):
                ctr = v[i]
                s = 0.0
                for j in range(7):
                    jj = i - 3 + j
                    vv = v[jj] if 0 <= jj < n else 0.0
                    s += sten[j] * (vv - ctr)  # zero-sum stencil on differences
                out[i] = s
        else:
            for i in range(3, n - 3):
                ctr = v[i]
                s = 0.0
                for j in range(7):
                    s += sten[j] * (v[i - 3 + j] - ctr)
                out[i] = s
        # boundary data and lift derivatives from the closed-form solution
        e0 = math.exp(-5.0 * t)
        e1 = math.exp(1.0 - 5.0 * t)
        if dirichlet:
            g0 = (1.0 + e0) ** -2.0
            g1 = (1.0 + e1) ** -2.0
            g0p = 10.0 * e0 * (1.0 + e0) ** -3.0
            g1p = 10.0 * e1 * (1.0 + e1) ** -3.0
            phi_xx = 0.0
        else:
            g0 = -2.0 * e0 * (1.0 + e0) ** -3.0
            g1 = -2.0 * e1 * (1.0 + e1) ** -3.0
            g0p = 10.0 * e0 * (1.0 - 2.0 * e0) * (1.0 + e0) ** -4.0
            g1p = 10.0 * e1 * (1.0 - 2.0 * e1) * (1.0 + e1) ** -4.0
            phi_xx = -g0 + g1
        for i in range(n):
            xv = x[i]
            if dirichlet:
                phi = (1.0 - xv) * g0 + xv * g1
                phit = (1.0 - xv) * g0p + xv * g1p
            else:
                phi = (xv - 0.5 * xv * xv) * g0 + (0.5 * xv * xv) * g1
                phit = (xv - 0.5 * xv * xv) * g0p + (0.5 * xv * xv) * g1p
            uu = v[i] + phi
            f = -6.0 * uu * (1.0 - uu)
            out[i] = -scale * out[i] - f - (phit - phi_xx)
        return out

    v0 = _fisher_u(x, 0.0) - lift(x, 0.0)
    ode = OdeProblem(name=f"fisher-{bc.value}-M{M}", dim=n, t_end=t_end,
                     initial=v0, rhs=rhs,
                     exact=lambda t: _fisher_u(x, t) - lift(x, t),
                     params={"M": M, "bc": bc.value, "t_end": t_end})
    return RdProblem(name="fisher", M=M, bc=bc, species=1, grid=x, as_ode=ode,
                     exact_state=ode.exact, ref_n_start=None, ref_tol=1e-12,
                     lift=lift)


# -- bistable ----------------------------------------------------------------

def bistable_problem(M: int = 100, t_end: float = 0.0295) -> RdProblem:
    """u_t - u_xx + 1e4 u(u-1)(u-0.25) = 0, homogeneous Neumann, gaussian start.

    The solution is a traveling front that exits the domain near t = 0.0295.
    """
    h = 1.0 / M
    op = neumann_matrix(M, h=h, mu=1.0)
    scale = op.scale
    top = op.top_rows
    sten = op.stencil
    n = op.size

    def rhs(t, u):
        out = np.empty(n)
        for r in range(3):
            s_top = 0.0
            s_bot = 0.0
            for c in range(9):
                s_top += top[r, c] * u[c]
                s_bot += top[r, 8 - c] * u[n - 9 + c]
            out[r] = s_top
            out[n - 1 - r] = s_bot
        for i in range(3, n - 3):
            ctr = u[i]
            s = 0.0
            for j in range(7):
                s += sten[j] * (u[i - 3 + j] - ctr)
            out[i] = s
        for i in range(n):
            out[i] = -scale * out[i] - 1e4 * u[i] * (u[i] - 1.0) * (u[i] - 0.25)
        return out

    x = np.linspace(0.0, 1.0, M + 1)
    u0 = np.exp(-100.0 * x * x)
    ode = OdeProblem(name=f"bistable-M{M}", dim=n, t_end=t_end, initial=u0,
                     rhs=rhs, params={"M": M, "t_end": t_end})
    return RdProblem(name="bistable", M=M, bc=BoundaryCondition.NEUMANN,
                     species=1, grid=x, as_ode=ode,
                     ref_n_start=4800, ref_tol=1e-12)


# -- three-species kinetics with diffusion ------------------------------------

def three_species_problem(M: int = 100, t_end: float = 1.0) -> RdProblem:
    """Coupled u, v, w reaction-diffusion system with Dirichlet data.

    Rates: tau1 = tau3 = 4e-2, tau2 = tau4 = 1e4, tau5 = tau6 = 3e7; unit
    diffusion.  u has boundary value 1, so the first unknown block is u - 1
    (constant lift, no time/space derivatives); v and w vanish on the
    boundary already.  Initial data: u = 1 + sin(2 pi x), v = w = 0.
    """
    h = 1.0 / M
    op = dirichlet_matrix(M, h=h, mu=1.0)
    scale = op.scale
    top = op.top_rows
    sten = op.stencil
    nb = op.size

    t1 = 4e-2
    t2 = 1e4
    t3 = 4e-2
    t4 = 1e4
    t5 = 3e7
    t6 = 3e7

    def rhs(t, y):
        out = np.empty(3 * nb)
        for sp in range(3):
            base = sp * nb
            for r in range(2):
                s_top = 0.0
                s_bot = 0.0
                for c in range(8):
                    s_top += top[r, c] * y[base + c]
                    s_bot += top[r, 7 - c] * y[base + nb - 8 + c]
                out[base + r] = s_top
                out[base + nb - 1 - r] = s_bot
            for i in range(2, nb - 2):
                ctr = y[base + i]
                s = 0.0
                for j in range(7):
                    jj = i - 3 + j
                    vv = y[base + jj] if 0 <= jj < nb else 0.0
                    s += sten[j] * (vv - ctr)
                out[base + i] = s
        for i in range(nb):
            uu = y[i] + 1.0          # physical u
            vv = y[nb + i]
            ww = y[2 * nb + i]
            f1 = t1 * uu - t2 * vv * ww
            f2 = -t3 * uu + t4 * vv * ww + t5 * vv * vv
            f3 = -t6 * vv * vv
            out[i] = -scale * out[i] - f1
            out[nb + i] = -scale * out[nb + i] - f2
            out[2 * nb + i] = -scale * out[2 * nb + i] - f3
        return out

    x = np.linspace(0.0, 1.0, M + 1)[1:-1]
    u0 = np.sin(2.0 * np.pi * x)     # (1 + sin) shifted by the constant lift
    y0 = np.concatenate((u0, np.zeros(nb), np.zeros(nb)))
    ode = OdeProblem(name=f"three-species-M{M}", dim=3 * nb, t_end=t_end,
                     initial=y0, rhs=rhs,
                     params={"M": M, "t_end": t_end})
    return RdProblem(name="three_species", M=M, bc=BoundaryCondition.DIRICHLET,
                     species=3, grid=x, as_ode=ode,
                     ref_n_start=48000, ref_tol=1e-12)


PDE_PROBLEMS = ("fisher", "fisher_nbc", "bistable", "three_species")


def get_pde_problem(name: str, M: Optional[int] = None,
                    params: dict | None = None) -> RdProblem:
    params = dict(params or {})
    t_end = params.pop("t_end", params.pop("T", None))
    if params:
        raise KeyError(f"unknown PDE parameters {sorted(params)}")
    if name == "fisher":
        return fisher_problem(M or 80, BoundaryCondition.DIRICHLET,
                              t_end=t_end or 10.0)
    if name == "fisher_nbc":
        return fisher_problem(M or 80, BoundaryCondition.NEUMANN,
                              t_end=t_end or 10.0)
    if name == "bistable":
        return bistable_problem(M or 100, t_end=t_end or 0.0295)
    if name == "three_species":
        return three_species_problem(M or 100, t_end=t_end or 1.0)
    raise KeyError(f"unknown PDE problem {name!r}; known: {PDE_PROBLEMS}")


def snapshot_csv(problem: RdProblem, state: np.ndarray, species: int = 0,
                 physical: bool = True, t: float = 0.0) -> str:
    """Grid CSV ``x,value`` for one species block of a stacked state.

    With ``physical`` the lift (when any) is added back so the values are the
    PDE's own unknown rather than the homogenized one.
    """
    nb = problem.block
    block = state[species * nb:(species + 1) * nb].copy()
    if physical:
        if problem.lift is not None:
            block = block + problem.lift(problem.grid, t)
        elif problem.name == "three_species" and species == 0:
            block = block + 1.0
    buf = io.StringIO()
    buf.write("x,value\n")
    for xv, val in zip(problem.grid, block):
        buf.write(f"{float(xv)!r},{float(val)!r}\n")
    return buf.getvalue()
