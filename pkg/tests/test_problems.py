import math

import numpy as np
import pytest

from hdc.ivp import RunStatus, max_abs_error
from hdc.problems import (
    PROBLEMS,
    b5,
    b5_matrix,
    bernoulli,
    e5,
    get_problem,
    oscillatory,
    problem_id,
    robertson,
    van_der_pol,
)
from hdc.steppers import StepperKind, integrate


def test_registry_and_overrides():
    assert set(PROBLEMS) == {"bernoulli", "oscillatory", "b5", "e5", "robertson", "vdp"}
    p = get_problem("oscillatory", {"lambda": 3.0, "T": 12.0})
    assert p.params["lambda"] == 3.0
    assert p.t_end == 12.0
    with pytest.raises(KeyError):
        get_problem("nope")
    with pytest.raises(KeyError):
        get_problem("bernoulli", {"mu": 1.0})


def test_problem_id_distinguishes_params():
    assert problem_id(b5(5000.0)) != problem_id(b5(100.0))
    assert problem_id(b5(5000.0)) == problem_id(b5(5000.0))


# -- bernoulli -----------------------------------------------------------------

def test_bernoulli_initial_matches_exact():
    p = bernoulli()
    assert p.exact(0.0)[0] == pytest.approx(1.0, abs=np.spacing(1.0))


def test_bernoulli_exact_satisfies_ode():
    # derivative of the closed form: u = g^(-1/19), g = 10001 e^(1.9t) - 10000
    p = bernoulli()
    rng = np.random.default_rng(1)
    for t in rng.uniform(0.0, 10.0, size=100):
        g = 10001.0 * math.exp(1.9 * t) - 10000.0
        gp = 1.9 * 10001.0 * math.exp(1.9 * t)
        du = -(1.0 / 19.0) * g ** (-20.0 / 19.0) * gp
        u = p.exact(t)
        resid = du - p.rhs(t, u)[0]
        assert abs(resid) < 1e-12 * max(1.0, abs(du))


def test_bernoulli_u20_by_binary_powering():
    p = bernoulli()
    u = np.array([0.9])
    expect = -0.1 * 0.9 - 1000.0 * 0.9 ** 20
    assert p.rhs(0.0, u)[0] == pytest.approx(expect, rel=1e-14)


# -- oscillatory ----------------------------------------------------------------

def test_oscillatory_exact_values():
    p = oscillatory(lam=10.0)
    assert p.exact(0.0)[0] == 1.0
    assert p.exact(math.pi)[0] == pytest.approx(1.0, rel=1e-12)
    assert p.exact(math.pi / 2.0)[0] == pytest.approx(math.exp(10.0), rel=1e-12)
    assert p.t_end == 1e6


# -- b5 --------------------------------------------------------------------------

def test_b5_initial_and_matrix_consistency():
    p = b5(5000.0)
    assert np.array_equal(p.exact(0.0), np.ones(6))
    m = b5_matrix(5000.0)
    rng = np.random.default_rng(4)
    for t in rng.uniform(0.0, 2.0, size=100):
        y = p.exact(t)
        # closed-form derivative of each component
        c, s = math.cos(5000.0 * t), math.sin(5000.0 * t)
        e = math.exp(-10.0 * t)
        dy = np.array([
            -10.0 * e * (c + s) + 5000.0 * e * (c - s),
            -10.0 * e * (c - s) + 5000.0 * e * (-s - c),
            -4.0 * math.exp(-4.0 * t),
            -math.exp(-t),
            -0.5 * math.exp(-0.5 * t),
            -0.1 * math.exp(-0.1 * t),
        ])
        resid = dy - m @ y
        assert np.abs(resid).max() < 1e-8 * max(1.0, np.abs(dy).max())
        assert np.allclose(p.rhs(t, y), m @ y, rtol=1e-13, atol=1e-16)


def test_b5_rk4_coarse_step_error():
    p = b5(5000.0)
    run = integrate(p, StepperKind.RK4, 50_000)  # k = 4e-4
    assert run.status is RunStatus.COMPLETED
    err = max_abs_error(run, p.exact)[0]
    assert 1.31 / 2 <= err <= 1.31 * 2


def test_b5_eigenvalues():
    m = b5_matrix(5000.0)
    # block eigenvalues via characteristic polynomials
    for lam in (-4.0, -1.0, -0.5, -0.1):
        assert np.linalg.det(m - lam * np.eye(6)) == pytest.approx(0.0, abs=1e-6)
    block = m[:2, :2]
    tr, det = np.trace(block), np.linalg.det(block)
    # lambda^2 - tr*lambda + det = 0 at -10 +- 5000i
    lam = complex(-10.0, 5000.0)
    assert abs(lam * lam - tr * lam + det) < 1e-6 * abs(det)


# -- e5 ---------------------------------------------------------------------------

def test_e5_rhs_at_initial_state():
    p = e5()
    out = p.rhs(0.0, p.initial.copy())
    assert out[0] == pytest.approx(-7.89e-10 * 1.76e-3, rel=1e-14)
    assert out[0] == pytest.approx(-1.38864e-12, rel=1e-5)
    assert out[1] == pytest.approx(1.38864e-12, rel=1e-5)
    assert out[2] == pytest.approx(1.38864e-12, rel=1e-5)
    assert out[3] == 0.0


def test_e5_runaway_fourth_component():
    # the +1.13e3*y4 feedback makes every trajectory overrun the divergence
    # bound almost immediately; this pins the behaviour so regressions show up
    p = e5()
    run = integrate(p, StepperKind.DC6RK24, 7_500_000, max_samples=100)
    assert run.status is RunStatus.DIVERGED
    assert run.diverged_at is not None
    assert run.diverged_at * run.step < 0.05  # blows up near t ~ 0.02


# -- robertson ---------------------------------------------------------------------

def test_robertson_rhs_values():
    p = robertson()
    assert np.array_equal(p.rhs(0.0, p.initial.copy()), [-0.04, 0.04, 0.0])
    rng = np.random.default_rng(9)
    for _ in range(50):
        y = rng.uniform(0.0, 1.0, size=3)
        out = p.rhs(0.0, y)
        scale = np.abs(out).max() + 1e4 * y[1] * y[2] + 3e7 * y[1] ** 2
        assert abs(out.sum()) <= 8 * np.spacing(max(scale, 1.0))


def test_robertson_conservation_under_integration():
    p = robertson(t_end=100.0)
    n = 200_000
    run = integrate(p, StepperKind.DC6RK24, n)
    assert run.status is RunStatus.COMPLETED
    drift = np.abs(run.sample_states.sum(axis=1) - 1.0).max()
    assert drift <= 100 * np.finfo(float).eps * n


# -- van der Pol --------------------------------------------------------------------

def test_vdp_rhs_at_initial_state():
    p = van_der_pol()
    assert np.array_equal(p.rhs(0.0, p.initial.copy()), [0.0, -2.0])
    assert p.t_end == 3000.0 and p.params["mu"] == 1000.0


def test_vdp_mu_zero_energy_conservation():
    p = van_der_pol(mu=0.0, t_end=2.0 * math.pi)
    run = integrate(p, StepperKind.DC6RK24, 100, compiled=False)
    energy = (run.sample_states ** 2).sum(axis=1)
    assert np.abs(energy - 4.0).max() < 1e-10


# -- exact-solution residual sweep (central differences) ------------------------------

@pytest.mark.parametrize("factory,kwargs,horizon", [
    (bernoulli, {}, 10.0),
    (oscillatory, {"lam": 2.0}, 10.0),
    (b5, {"alpha": 50.0}, 2.0),
])
def test_exact_solutions_pass_difference_residual(factory, kwargs, horizon):
    p = factory(**kwargs)
    rng = np.random.default_rng(0)
    delta = 1e-4
    w = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * delta)
    for t in rng.uniform(5 * delta, horizon - 5 * delta, size=20):
        states = np.array([p.exact(t + j * delta) for j in (-2, -1, 0, 1, 2)])
        du = w @ states
        f = p.rhs(t, p.exact(t))
        scale = np.abs(du).max() + np.abs(p.exact(t)).max()
        assert np.abs(du - f).max() < 1e-6 * max(scale, 1.0)
