import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdc.ivp import OdeProblem, RunStatus
from hdc.stability import big_r, expand_coefficients, q_rk4
from hdc.steppers import (
    StepperKind,
    dc6_step,
    dc6_step_work,
    integrate,
    midpoint_step,
    rk4_step,
    rk6_step,
    step_once,
)
from hdc.problems import bernoulli, oscillatory


class CountingRhs:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, t, u):
        self.calls += 1
        return self.fn(t, u)


def zero_rhs(t, u):
    return np.zeros_like(u)


# -- fixed points and exact cases ---------------------------------------------

@pytest.mark.parametrize("kind", list(StepperKind))
def test_zero_rhs_is_fixed_point(kind):
    u = np.array([1.5, -2.0])
    out = step_once(kind, zero_rhs, 0.0, u, 0.3)
    assert np.array_equal(out, u)


def test_dc6_zero_rhs_corrections_vanish():
    _, work = dc6_step_work(zero_rhs, 0.0, np.array([2.0]), 0.5)
    assert np.all(work.a == 0.0) and np.all(work.b == 0.0)


def test_rk4_integrates_cubic_exactly():
    u1, _ = rk4_step(lambda t, u: np.array([t ** 3]), 0.0, np.array([0.0]), 1.0)
    assert u1[0] == 0.25


def test_midpoint_exact_on_linear_in_t():
    out = midpoint_step(lambda t, u: np.array([2.0 * t]), 0.0, np.array([0.0]), 1.0)
    assert out[0] == 1.0


def test_midpoint_linear_amplification():
    for z in (-1.5, -0.3, 0.7):
        out = midpoint_step(lambda t, u: z * u, 0.0, np.array([1.0]), 1.0)
        assert out[0] == pytest.approx(1.0 + z + z * z / 2.0, rel=1e-15)


def test_rk4_linear_matches_q():
    for z in np.linspace(-2.7, 0.5, 13):
        u1, _ = rk4_step(lambda t, u, z=z: z * u, 0.0, np.array([1.0]), 1.0)
        assert abs(u1[0] - q_rk4(z)) <= 8 * np.spacing(max(abs(q_rk4(z)), 1.0))


def test_rk6_polynomial_coefficients():
    # fit the degree-7 amplification polynomial from 8 one-step values
    zs = np.linspace(-1.0, 0.4, 8)
    vals = [rk6_step(lambda t, u, z=z: z * u, 0.0, np.array([1.0]), 1.0)[0]
            for z in zs]
    coeffs = np.linalg.solve(np.vander(zs, 8, increasing=True), np.array(vals))
    for j in range(7):
        assert coeffs[j] == pytest.approx(1.0 / math.factorial(j), abs=5e-9)
    assert coeffs[7] == pytest.approx(-1.0 / 2160.0, abs=5e-9)


def test_dc6_matches_amplification_polynomial():
    rng = np.random.default_rng(3)
    for _ in range(100):
        z = rng.uniform(-5.0, 0.0)
        got = dc6_step(lambda t, u, z=z: z * u, 0.0, np.array([1.0]), 1.0)[0]
        assert got == pytest.approx(complex(big_r(z)).real, rel=2e-13, abs=1e-14)


def test_stencil_weights_on_work():
    # recompute a and b from the plain weighted-sum formulas
    p = bernoulli()
    _, work = dc6_step_work(p.rhs, 0.0, p.initial.copy(), 1e-4)
    v = work.sub_states
    a = (125.0 / 384.0) * (-3.0 * v[0] - v[1] + 18.0 * v[2] - 18.0 * v[3]
                           + v[4] + 3.0 * v[5])
    b = (25.0 / 768.0) * (145.0 * v[0] - 387.0 * v[1] + 402.0 * v[2]
                          - 238.0 * v[3] + 93.0 * v[4] - 15.0 * v[5])
    assert work.a[0] == pytest.approx(a[0], rel=1e-9, abs=1e-18)
    assert work.b[0] == pytest.approx(b[0], rel=1e-9, abs=1e-18)
    assert work.substep == pytest.approx(2e-5)


# -- eval counts ---------------------------------------------------------------

@pytest.mark.parametrize("kind,expected", [
    (StepperKind.RK2_MIDPOINT, 2),
    (StepperKind.RK4, 4),
    (StepperKind.RK6, 7),
    (StepperKind.DC6RK24, 21),
])
def test_single_step_eval_count(kind, expected):
    rhs = CountingRhs(lambda t, u: -u)
    step_once(kind, rhs, 0.0, np.array([1.0]), 0.1)
    assert rhs.calls == expected == kind.evals_per_step


@pytest.mark.parametrize("kind", list(StepperKind))
def test_integrate_eval_count_matches_wrapper(kind):
    rhs = CountingRhs(lambda t, u: -u)
    prob = OdeProblem(name="decay", dim=1, t_end=1.0, initial=np.array([1.0]),
                      rhs=rhs)
    run = integrate(prob, kind, 50, compiled=False)
    assert run.status is RunStatus.COMPLETED
    assert rhs.calls == run.rhs_evals == 50 * kind.evals_per_step


# -- linear equivalence over many steps ----------------------------------------

@given(zk=st.floats(-3.0, 0.0), n=st.integers(1, 50))
@settings(max_examples=60, deadline=None)
def test_linear_equivalence_n_steps(zk, n):
    for kind in (StepperKind.RK2_MIDPOINT, StepperKind.RK4, StepperKind.DC6RK24):
        poly = expand_coefficients(kind)
        expect = complex(poly(zk)).real ** n
        u = np.array([1.0])
        for i in range(n):
            u = step_once(kind, lambda t, v: zk * v, i * 1.0, u, 1.0)
        tol = n * 64 * np.spacing(max(abs(expect), 1.0))
        assert abs(u[0] - expect) <= tol


# -- correction-stencil accuracy on exact samples ------------------------------

def _stencil_errors(k):
    h = k / 5.0
    v = [np.array([math.exp(i * h)]) for i in range(6)]
    a = (125.0 / 384.0) * (-3.0 * v[0] - v[1] + 18.0 * v[2] - 18.0 * v[3]
                           + v[4] + 3.0 * v[5])
    b = (25.0 / 768.0) * (145.0 * v[0] - 387.0 * v[1] + 402.0 * v[2]
                          - 238.0 * v[3] + 93.0 * v[4] - 15.0 * v[5])
    e1 = math.exp(k) - 1.0 - k * math.exp(0.5 * k)
    e2 = math.exp(0.5 * k) - 1.0 - 0.5 * k
    return abs(a[0] - e1), abs(b[0] - e2)


def test_stencil_accuracy_orders():
    # k large enough that truncation dominates double-precision roundoff
    ea2, eb2 = _stencil_errors(2.0)
    ea1, eb1 = _stencil_errors(1.0)
    ea05, eb05 = _stencil_errors(0.5)
    assert 2 ** 6 * 0.8 <= ea2 / ea1 <= 2 ** 8 * 1.2
    assert 2 ** 6 * 0.8 <= ea1 / ea05 <= 2 ** 8 * 1.2
    assert 2 ** 5 * 0.8 <= eb2 / eb1 <= 2 ** 7 * 1.2
    assert 2 ** 5 * 0.8 <= eb1 / eb05 <= 2 ** 7 * 1.2


# -- integrate driver -----------------------------------------------------------

def test_integrate_zero_rhs_counts():
    prob = OdeProblem(name="zero", dim=2, t_end=1.0,
                      initial=np.array([1.0, -1.0]), rhs=zero_rhs)
    run = integrate(prob, StepperKind.DC6RK24, 20, compiled=False)
    assert run.status is RunStatus.COMPLETED
    assert np.all(run.sample_states == np.array([1.0, -1.0]))
    assert run.rhs_evals == 20 * 21
    assert run.sample_times[0] == 0.0
    assert run.sample_times[-1] == pytest.approx(1.0, abs=4 * np.spacing(1.0))


def test_integrate_sample_times_on_grid():
    prob = OdeProblem(name="decay", dim=1, t_end=2.0, initial=np.array([1.0]),
                      rhs=lambda t, u: -u)
    run = integrate(prob, StepperKind.RK4, 1000, max_samples=37, compiled=False)
    assert len(run.sample_times) == 37
    on_grid = run.sample_times / run.step
    assert np.allclose(on_grid, np.round(on_grid), atol=1e-9)


def test_integrate_divergence_keeps_finite_samples():
    # blows past the bound quickly: u' = u^3 from u=2 with big steps
    prob = OdeProblem(name="blow", dim=1, t_end=10.0, initial=np.array([2.0]),
                      rhs=lambda t, u: u ** 3)
    run = integrate(prob, StepperKind.RK4, 100, compiled=False)
    assert run.status is RunStatus.DIVERGED
    assert run.diverged_at is not None
    assert np.all(np.isfinite(run.sample_states))
    assert run.rhs_evals == run.diverged_at * 4


def test_integrate_bernoulli_rk4_coarse_step():
    # at k = 4e-3 the fourth-order method either blows up or carries huge error
    p = bernoulli()
    run = integrate(p, StepperKind.RK4, 2500)
    if run.status is RunStatus.COMPLETED:
        from hdc.ivp import max_abs_error
        err = max_abs_error(run, p.exact)[0]
        assert err > 1e9
    else:
        assert run.diverged_at is not None


def test_integrate_compiled_matches_python_exactly():
    p = oscillatory(lam=2.0, t_end=5.0)
    fast = integrate(p, StepperKind.DC6RK24, 400, compiled=True)
    slow = integrate(p, StepperKind.DC6RK24, 400, compiled=False)
    assert np.array_equal(fast.sample_states, slow.sample_states)
    assert fast.rhs_evals == slow.rhs_evals


def test_integrate_compiled_rejects_uncompilable_when_forced():
    class Weird:
        def __call__(self, t, u):
            return -u

    prob = OdeProblem(name="w", dim=1, t_end=1.0, initial=np.array([1.0]),
                      rhs=Weird())
    with pytest.raises(TypeError):
        integrate(prob, StepperKind.RK4, 10, compiled=True)
    run = integrate(prob, StepperKind.RK4, 10)  # auto mode falls back
    assert run.status is RunStatus.COMPLETED


def test_integrate_validates_sample_at():
    p = bernoulli()
    with pytest.raises(ValueError):
        integrate(p, StepperKind.RK4, 10, sample_at=np.array([1, 5, 10]))
    with pytest.raises(ValueError):
        integrate(p, StepperKind.RK4, 10, sample_at=np.array([0, 5, 4]))


# -- convergence behaviour -------------------------------------------------------

def test_dc6_order_six_on_smooth_problem():
    # u' = u*cos(t) over one unit: order-six error decay between two steps
    # (n=50 already sits within two decades of the roundoff floor, so the
    # coarser pair is the one with a clean signal)
    p = oscillatory(lam=1.0, t_end=1.0)
    errs = {}
    for n in (25, 50):
        run = integrate(p, StepperKind.DC6RK24, n, compiled=False)
        from hdc.ivp import max_abs_error
        errs[n] = max_abs_error(run, p.exact)[0]
    ratio = errs[25] / errs[50]
    assert 2 ** 6 * 0.7 <= ratio <= 2 ** 6 * 1.4


def test_rk6_bernoulli_fine_steps():
    # fine-step errors on the damped problem are set inside a narrow initial
    # layer whose sampled value is extraction-sensitive; assert the magnitude
    # window and that the pair converges at high order
    p = bernoulli()
    errs = {}
    for k in (1e-5, 5e-6):
        run = integrate(p, StepperKind.RK6, round(10.0 / k))
        assert run.status is RunStatus.COMPLETED
        from hdc.ivp import max_abs_error, observed_order
        errs[k] = max_abs_error(run, p.exact)[0]
    assert 3.51e-12 / 4 <= errs[5e-6] <= 3.51e-12 * 4
    from hdc.ivp import observed_order
    assert observed_order(errs[1e-5], 1e-5, errs[5e-6], 5e-6) >= 3.9


def test_dcc_divided_differences_scale_like_k4():
    # forward differences of the fourth-order error sequence stay O(k^4):
    # halving k shrinks the max first difference by roughly 2^4
    p = oscillatory(lam=1.0, t_end=1.0)
    maxima = {}
    for n in (100, 200):
        run = integrate(p, StepperKind.RK4, n, compiled=False)
        errs = np.array([run.sample_states[i, 0] - p.exact(t)[0]
                         for i, t in enumerate(run.sample_times)])
        k = run.step
        maxima[n] = np.abs(np.diff(errs)).max() / k
    assert 12.0 <= maxima[100] / maxima[200] <= 20.0
