import numpy as np
import pytest

from hdc.ivp import OdeProblem
from hdc.oracle import (
    OracleDiverged,
    ReferenceTrajectory,
    cache_load,
    cache_path,
    cache_store,
    cached_reference,
    reference_trajectory,
    resolve_cache_dir,
)
from hdc.problems import bernoulli, oscillatory, problem_id
from hdc.steppers import StepperKind


def test_reference_agrees_with_exact_solution():
    p = oscillatory(lam=1.0, t_end=10.0)
    tol = 1e-12
    ref = reference_trajectory(p, problem_id(p), 400, tol, n_samples=100)
    assert ref.agreement <= tol
    exact = np.array([p.exact(t) for t in ref.sample_times])
    assert np.abs(ref.states - exact).max() <= 10 * tol


def test_reference_zero_rhs_converges_immediately():
    prob = OdeProblem(name="zero", dim=1, t_end=1.0, initial=np.array([3.0]),
                      rhs=lambda t, u: np.zeros_like(u))
    ref = reference_trajectory(prob, "zero-x", 100, 1e-14, n_samples=50)
    assert ref.agreement == 0.0
    assert ref.n_steps_finest == 200
    assert np.all(ref.states == 3.0)


def test_reference_diverged_signal():
    prob = OdeProblem(name="blow", dim=1, t_end=10.0, initial=np.array([2.0]),
                      rhs=lambda t, u: u ** 3)
    with pytest.raises(OracleDiverged):
        reference_trajectory(prob, "blow-x", 100, 1e-10, n_samples=100)


def test_reference_requires_divisible_sampling():
    p = oscillatory(lam=1.0, t_end=1.0)
    with pytest.raises(ValueError):
        reference_trajectory(p, "x", 150, 1e-10, n_samples=100)


def test_agreement_shrinks_fast_per_doubling():
    # order-6 generator in its asymptotic regime: each doubling should cut
    # the run-to-run disagreement by >= 2^5
    from hdc.oracle import OracleBudgetExhausted

    p = bernoulli()
    pid = problem_id(p)
    pairs = []
    for n in (400_000, 800_000):
        with pytest.raises(OracleBudgetExhausted) as info:
            reference_trajectory(p, pid, n, 1e-30, n_samples=100,
                                 max_total_steps=3 * n)
        pairs.append(info.value.best.agreement)
    assert pairs[0] / pairs[1] >= 2 ** 5


# -- cache ---------------------------------------------------------------------

def _ref(pid="demo-abc123"):
    times = np.linspace(0.0, 1.0, 11)
    states = np.sin(np.outer(times, [1.0, 2.0, 3.0]))
    return ReferenceTrajectory(problem_id=pid, sample_times=times, states=states,
                               agreement=2.5e-13, generator=StepperKind.DC6RK24,
                               n_steps_finest=12800)


def test_cache_round_trip_bit_exact(tmp_path):
    ref = _ref()
    cache_store(ref, tmp_path)
    back = cache_load(ref.problem_id, tmp_path)
    assert back is not None
    assert back.problem_id == ref.problem_id
    assert np.array_equal(back.sample_times, ref.sample_times)
    assert np.array_equal(back.states, ref.states)
    assert back.agreement == ref.agreement
    assert back.generator is ref.generator
    assert back.n_steps_finest == ref.n_steps_finest


def test_cache_miss_for_other_id(tmp_path):
    cache_store(_ref(), tmp_path)
    assert cache_load("other-id", tmp_path) is None


def test_cache_detects_corruption(tmp_path):
    ref = _ref()
    path = cache_store(ref, tmp_path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0x40  # flip one bit in the payload
    path.write_bytes(bytes(raw))
    assert cache_load(ref.problem_id, tmp_path) is None


def test_cache_rejects_truncated_file(tmp_path):
    ref = _ref()
    path = cache_store(ref, tmp_path)
    path.write_bytes(path.read_bytes()[:40])
    assert cache_load(ref.problem_id, tmp_path) is None


def test_cached_reference_reuses_file(tmp_path):
    p = oscillatory(lam=1.0, t_end=2.0)
    pid = problem_id(p)
    ref1 = cached_reference(p, pid, 200, 1e-11, n_samples=100, cache_dir=tmp_path)
    assert cache_path(pid, tmp_path).exists()
    stamp = cache_path(pid, tmp_path).stat().st_mtime_ns
    ref2 = cached_reference(p, pid, 200, 1e-11, n_samples=100, cache_dir=tmp_path)
    assert cache_path(pid, tmp_path).stat().st_mtime_ns == stamp
    assert np.array_equal(ref1.states, ref2.states)


def test_resolve_cache_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HDC_REF_CACHE", str(tmp_path))
    assert resolve_cache_dir(None) == tmp_path
    assert resolve_cache_dir("/elsewhere").name == "elsewhere"
    monkeypatch.delenv("HDC_REF_CACHE")
    assert resolve_cache_dir(None) is None
