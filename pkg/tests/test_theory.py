import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newstein import (IterationBoundInput, SpikedModelSpec, fit_composite, generate_spiked,
                      iteration_bound, step_size_suggest, subsample_covariance,
                      suggest_rank, suggest_sample_size)
from newstein.errors import Degenerate, InfeasibleStart
from newstein.theory import simulate_recurrence


def test_step_size_examples():
    assert step_size_suggest(1.0, 100, math.inf) == 1.0
    expected = 2.0 / (1.0 + (1.0 - math.sqrt(100 / 1000)))
    assert step_size_suggest(1.0, 100, 1000) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1.18781, abs=1e-5)
    # correction capped at 0.9 * s2 gives the largest reachable step, 2 / 1.1
    assert step_size_suggest(0.5, 100, 10) == pytest.approx(2 / 1.1, rel=1e-15)
    assert step_size_suggest(0.5, 100, 10) <= 1.95
    with pytest.raises(ValueError):
        step_size_suggest(0.0, 10, 10)


@settings(max_examples=200, deadline=None)
@given(s2=st.floats(1e-3, 1e3), p=st.integers(1, 10_000), c=st.floats(0.0, 10.0),
       s=st.integers(1, 10**6), ds=st.integers(0, 10**6))
def test_step_size_range_and_monotone(s2, p, c, s, ds):
    g1 = step_size_suggest(s2, p, s, c)
    g2 = step_size_suggest(s2, p, s + ds, c)
    assert 1.0 <= g2 <= g1 <= 1.95


def test_sample_size_examples():
    assert suggest_sample_size(300, 10**6) == 1712
    assert suggest_sample_size(2, 3) == 2
    assert suggest_sample_size(100, 50) == 50
    with pytest.raises(ValueError):
        suggest_sample_size(1, 10)


def test_rank_examples():
    assert suggest_rank([10, 9, 8, 1, 1, 1]).rank == 3
    with pytest.warns(RuntimeWarning):
        res = suggest_rank([2.0] * 6)
    assert res.rank == 0 and res.warning
    with pytest.raises(ValueError):
        suggest_rank([1.0, 2.0])


def spiked_spectrum(theta, seed, p=50):
    spec = SpikedModelSpec(n=suggest_sample_size(p, 10**9), p=p, r=len(theta),
                           theta=theta, seed=seed)
    data = generate_spiked(spec)
    cov = subsample_covariance(data, data.n)
    return np.linalg.eigvalsh(cov.M)[::-1]


def test_rank_on_generated_spikes():
    assert suggest_rank(spiked_spectrum((20, 15, 10), seed=0)).rank == 3


def test_rank_recovery_rate():
    hits = sum(suggest_rank(spiked_spectrum((20, 10, 5), seed=s)).rank == 3
               for s in range(100))
    assert hits >= 95


def test_fit_pure_linear():
    fit = fit_composite(0.5 ** np.arange(20))
    assert fit.tau1 == pytest.approx(0.5, rel=1e-9)
    assert abs(fit.tau2) < 1e-6
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.transition_iter == 0


def recurrence(t1, t2, e0, steps):
    e = [e0]
    for _ in range(steps):
        e.append(t1 * e[-1] + t2 * e[-1] ** 2)
    return np.array(e)


def test_fit_recovers_recurrence():
    fit = fit_composite(recurrence(0.3, 2.0, 0.1, 12))
    assert fit.tau1 == pytest.approx(0.3, rel=0.05)
    assert fit.tau2 == pytest.approx(2.0, rel=0.05)
    assert 0 <= fit.r_squared <= 1


def test_fit_transition_after_quadratic_phase():
    e = recurrence(0.05, 5.0, 0.15, 10)
    fit = fit_composite(e)
    assert fit.transition_iter is not None and fit.transition_iter >= 1


def test_fit_scale_consistency():
    e = recurrence(0.3, 2.0, 0.1, 12)
    base = fit_composite(e)
    for c in (1e-3, 0.5, 7.0, 1e4):
        scaled = fit_composite(c * e)
        assert scaled.tau1 == pytest.approx(base.tau1, rel=1e-6)
        assert scaled.tau2 == pytest.approx(base.tau2 / c, rel=1e-6)


def test_fit_errors():
    with pytest.raises(Degenerate):
        fit_composite([0.1, 0.01])
    with pytest.raises(Degenerate):
        fit_composite(np.zeros(10))


def test_fit_stops_at_exact_zero():
    fit = fit_composite([0.5, 0.25, 0.125, 0.0625, 0.0, 0.0])
    assert fit.n_points == 4


def test_bound_infeasible():
    with pytest.raises(InfeasibleStart):
        iteration_bound(IterationBoundInput(0.5, 1.0, 0.6, 1e-6))
    with pytest.raises(ValueError):
        iteration_bound(IterationBoundInput(0.5, 1.0, 0.25, 0.3))


def test_bound_example():
    b = iteration_bound(IterationBoundInput(0.5, 1.0, 0.25, 1e-6))
    assert b.J_star >= simulate_recurrence(0.5, 1.0, 0.25, 1e-6)
    lo, hi = 0.5 * 0.25 / (1 - 0.25), 0.25
    assert lo < b.xi_star < hi
    assert b.J_star == b.quadratic_iters + b.linear_iters >= math.ceil(b.J_value)


def test_bound_small_when_eps_near_theta():
    b = iteration_bound(IterationBoundInput(0.5, 1.0, 0.25, 0.2499))
    assert b.J_star <= 3


def test_bound_valid_on_random_tuples():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 500:
        t1 = rng.uniform(0, 0.95)
        t2 = 10 ** rng.uniform(-2, 2)
        th = rng.uniform(0.01, 0.99) * (1 - t1) / t2
        eps = th * 10 ** rng.uniform(-12, -0.01)
        b = iteration_bound(IterationBoundInput(t1, t2, th, eps))
        assert b.J_star >= simulate_recurrence(t1, t2, th, eps), (t1, t2, th, eps)
        checked += 1
