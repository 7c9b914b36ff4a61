"""Stiff ODE benchmark problems with exact solutions where derivable.

Every factory returns an :class:`~hdc.ivp.OdeProblem` whose ``rhs`` is written
in numba-compilable form (scalar loops, preallocated output) so the compiled
integration path applies.  Closed-form solutions are differentiated
analytically in the test suite before being trusted as error oracles.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .ivp import OdeProblem

__all__ = [
    "bernoulli",
    "oscillatory",
    "b5",
    "e5",
    "robertson",
    "van_der_pol",
    "PROBLEMS",
    "get_problem",
    "problem_id",
]


def bernoulli() -> OdeProblem:
    """u' = -0.1 u - 1000 u^20, u(0) = 1, on [0, 10].

    Strongly damped once u < 1; the closed-form solution follows from the
    substitution v = u^-19, which turns the equation into v' = 1.9 v + 19000.
    """

    def rhs(t, u):
        out = np.empty(1)
        x = u[0]
        x2 = x * x
        x4 = x2 * x2
        x8 = x4 * x4
        x16 = x8 * x8
        out[0] = -0.1 * x - 1000.0 * (x16 * x4)
        return out

    def exact(t):
        return np.array([(10001.0 * math.exp(1.9 * t) - 10000.0) ** (-1.0 / 19.0)])

    return OdeProblem(name="bernoulli", dim=1, t_end=10.0,
                      initial=np.array([1.0]), rhs=rhs, exact=exact)


def oscillatory(lam: float = 10.0, t_end: float = 1e6) -> OdeProblem:
    """u' = lam * u * cos(t), u(0) = 1; exact solution exp(lam * sin(t)).

    The default horizon 1e6 exercises long-term integration; tests mostly
    override it.
    """

    def rhs(t, u):
        out = np.empty(1)
        out[0] = lam * u[0] * math.cos(t)
        return out

    def exact(t):
        return np.array([math.exp(lam * math.sin(t))])

    return OdeProblem(name="oscillatory", dim=1, t_end=float(t_end),
                      initial=np.array([1.0]), rhs=rhs, exact=exact,
                      params={"lambda": float(lam), "t_end": float(t_end)})


def b5(alpha: float = 5000.0) -> OdeProblem:
    """Linear 6x6 block-diagonal system with eigenvalues -10 +- alpha*i,
    -4, -1, -0.5, -0.1; all initial components 1, T = 20.

    The leading 2x2 rotation-with-decay block makes the problem stiff with
    dominantly imaginary eigenvalues.
    """
    a = float(alpha)

    def rhs(t, y):
        out = np.empty(6)
        out[0] = -10.0 * y[0] + a * y[1]
        out[1] = -a * y[0] - 10.0 * y[1]
        out[2] = -4.0 * y[2]
        out[3] = -y[3]
        out[4] = -0.5 * y[4]
        out[5] = -0.1 * y[5]
        return out

    def exact(t):
        c = math.cos(a * t)
        s = math.sin(a * t)
        e = math.exp(-10.0 * t)
        return np.array([e * (c + s), e * (c - s), math.exp(-4.0 * t),
                         math.exp(-t), math.exp(-0.5 * t), math.exp(-0.1 * t)])

    return OdeProblem(name="b5", dim=6, t_end=20.0, initial=np.ones(6),
                      rhs=rhs, exact=exact, params={"alpha": a})


def b5_matrix(alpha: float = 5000.0) -> np.ndarray:
    m = np.zeros((6, 6))
    m[0, 0] = -10.0
    m[0, 1] = alpha
    m[1, 0] = -alpha
    m[1, 1] = -10.0
    m[2, 2] = -4.0
    m[3, 3] = -1.0
    m[4, 4] = -0.5
    m[5, 5] = -0.1
    return m


def e5(t_end: float = 1000.0) -> OdeProblem:
    """Four-species kinetics system, y(0) = (1.76e-3, 0, 0, 0).

    No closed-form solution; note that the y4 equation feeds back positively
    (+1.13e3*y4), so y4 grows like exp(1130*t) once the y1*y2 source turns
    on and every trajectory overruns the divergence bound near t ~ 0.02.
    """

    def rhs(t, y):
        out = np.empty(4)
        p = 1.1e7 * y[0] * y[1]
        q = 1.13e9 * y[1] * y[2]
        out[0] = -7.89e-10 * y[0] - p
        out[1] = 7.89e-10 * y[0] - q
        out[2] = 7.89e-10 * y[0] - p + 1.13e3 * y[3] - q
        out[3] = p + 1.13e3 * y[3]
        return out

    return OdeProblem(name="e5", dim=4, t_end=float(t_end),
                      initial=np.array([1.76e-3, 0.0, 0.0, 0.0]), rhs=rhs,
                      params={"t_end": float(t_end)})


def robertson(t_end: float = 1e5) -> OdeProblem:
    """The classic three-species kinetics problem, y(0) = (1, 0, 0).

    The component sum is conserved by the exact flow (the equations add to
    zero).  Full horizon 1e5; pass t_end=100 for a desk-scale variant.
    """

    def rhs(t, y):
        out = np.empty(3)
        r1 = 0.04 * y[0]
        r2 = 1e4 * y[1] * y[2]
        r3 = 3e7 * y[1] * y[1]
        out[0] = -r1 + r2
        out[1] = r1 - r2 - r3
        out[2] = r3
        return out

    return OdeProblem(name="robertson", dim=3, t_end=float(t_end),
                      initial=np.array([1.0, 0.0, 0.0]), rhs=rhs,
                      params={"t_end": float(t_end)})


def van_der_pol(mu: float = 1000.0, t_end: float = 3000.0) -> OdeProblem:
    """y1' = y2, y2' = mu (1 - y1^2) y2 - y1, y(0) = (2, 0).

    mu = 0 reduces to the harmonic oscillator (energy y1^2 + y2^2 conserved),
    which the tests use as an analytically known special case.
    """
    m = float(mu)

    def rhs(t, y):
        out = np.empty(2)
        out[0] = y[1]
        out[1] = m * (1.0 - y[0] * y[0]) * y[1] - y[0]
        return out

    return OdeProblem(name="vdp", dim=2, t_end=float(t_end),
                      initial=np.array([2.0, 0.0]), rhs=rhs,
                      params={"mu": m, "t_end": float(t_end)})


PROBLEMS = {
    "bernoulli": bernoulli,
    "oscillatory": oscillatory,
    "b5": b5,
    "e5": e5,
    "robertson": robertson,
    "vdp": van_der_pol,
}

_PARAM_NAMES = {
    "bernoulli": (),
    "oscillatory": ("lam", "t_end"),
    "b5": ("alpha",),
    "e5": ("t_end",),
    "robertson": ("t_end",),
    "vdp": ("mu", "t_end"),
}

_PARAM_ALIASES = {"lambda": "lam", "T": "t_end"}


def get_problem(name: str, params: dict | None = None) -> OdeProblem:
    """Look up a problem by name with optional parameter overrides."""
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}")
    kwargs = {}
    for key, value in (params or {}).items():
        key = _PARAM_ALIASES.get(key, key)
        if key not in _PARAM_NAMES[name]:
            raise KeyError(f"problem {name!r} takes no parameter {key!r}")
        kwargs[key] = value
    return PROBLEMS[name](**kwargs)


def problem_id(problem: OdeProblem) -> str:
    """Stable identifier: name plus a canonical-parameter hash."""
    canon = ";".join(f"{k}={problem.params[k]!r}" for k in sorted(problem.params))
    canon += f";dim={problem.dim};t_end={problem.t_end!r}"
    digest = hashlib.sha256(canon.encode()).hexdigest()[:12]
    return f"{problem.name}-{digest}"
