import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from newstein import Dataset, gradient, hessian, neg_log_likelihood
from newstein.errors import DimensionMismatch, NonFiniteError
from newstein.family import LEAST_SQUARES, LOGISTIC, POISSON


def loop_nll(beta, X, y, family):
    """Per-term summation with scalar math; independent of the vectorised path."""
    total = 0.0
    for xi, yi in zip(X, y):
        z = sum(a * b for a, b in zip(xi, beta))
        if family == "logistic":
            phi = max(z, 0.0) + math.log1p(math.exp(-abs(z)))
        elif family == "least_squares":
            phi = z * z
        else:
            phi = math.exp(z)
        total += phi - yi * z
    return total / len(y)


def fd_gradient(f, beta, h=1e-6):
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def test_logistic_at_zero_is_log2(rng, backend):
    data = make_instance(rng, 30, 4)
    assert neg_log_likelihood(np.zeros(4), data, LOGISTIC, backend) == pytest.approx(
        math.log(2), abs=1e-15)


def test_least_squares_zero():
    data = Dataset(np.ones((3, 2)), np.zeros(3))
    assert neg_log_likelihood(np.zeros(2), data, LEAST_SQUARES) == 0.0


@pytest.mark.parametrize("family", ["logistic", "least_squares", "poisson"])
def test_nll_matches_loop_oracle(rng, backend, family):
    data = make_instance(rng, 5, 2, family)
    beta = rng.standard_normal(2)
    got = neg_log_likelihood(beta, data, family, backend)
    assert got == pytest.approx(loop_nll(beta, data.X, data.y, family), rel=1e-12, abs=1e-14)


def test_gradient_at_zero_logistic(rng, backend):
    data = make_instance(rng, 40, 3)
    expected = ((0.5 - data.y)[:, None] * data.X).mean(axis=0)
    np.testing.assert_allclose(gradient(np.zeros(3), data, LOGISTIC, backend), expected,
                               rtol=1e-12, atol=1e-15)


def test_gradient_vanishes_on_exact_least_squares(rng, backend):
    X = rng.standard_normal((20, 3))
    beta = rng.standard_normal(3)
    data = Dataset(X, 2 * X @ beta)
    assert np.linalg.norm(gradient(beta, data, LEAST_SQUARES, backend)) < 1e-13


def test_hessian_closed_forms(rng):
    data = make_instance(rng, 25, 4)
    XtX = data.X.T @ data.X
    np.testing.assert_allclose(hessian(rng.standard_normal(4), data, LEAST_SQUARES),
                               2 * XtX / 25, rtol=1e-13)
    np.testing.assert_allclose(hessian(np.zeros(4), data, LOGISTIC), XtX / (4 * 25),
                               rtol=1e-13)


@pytest.mark.parametrize("family", ["logistic", "least_squares", "poisson"])
def test_calculus_consistency_many_instances(family):
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, p = rng.integers(5, 40), rng.integers(1, 6)
        data = make_instance(rng, n, p, family)
        beta = rng.standard_normal(p) * 0.5
        f = lambda b: neg_log_likelihood(b, data, family)
        g = gradient(beta, data, family)
        fd = fd_gradient(f, beta)
        assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-3)
        H = hessian(beta, data, family)
        fdH = np.column_stack([
            (gradient(beta + e, data, family) - gradient(beta - e, data, family)) / 2e-6
            for e in np.eye(p) * 1e-6
        ])
        assert np.linalg.norm(fdH - H) <= 1e-5 * np.linalg.norm(H)


def test_hessian_symmetric_psd(rng):
    for family in ("logistic", "least_squares", "poisson"):
        data = make_instance(rng, 60, 8, family)
        H = hessian(rng.standard_normal(8), data, family)
        assert np.array_equal(H, H.T)
        assert np.linalg.eigvalsh(H)[0] >= -1e-10


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0, 1),
       family=st.sampled_from(["logistic", "least_squares"]))
def test_convexity(seed, t, family):
    rng = np.random.default_rng(seed)
    data = make_instance(rng, 20, 3, family)
    b1, b2 = rng.standard_normal(3) * 2, rng.standard_normal(3) * 2
    f = lambda b: neg_log_likelihood(b, data, family)
    assert f(t * b1 + (1 - t) * b2) <= t * f(b1) + (1 - t) * f(b2) + 1e-12


def test_logistic_stable_at_large_margins():
    X = np.array([[700.0], [-700.0]])
    data = Dataset(X, np.array([0.0, 1.0]))
    val = neg_log_likelihood(np.ones(1), data, LOGISTIC)
    assert val == pytest.approx(700.0)


def test_poisson_clamp_keeps_objective_finite():
    data = Dataset(np.array([[800.0]]), np.array([0.0]))
    assert np.isfinite(neg_log_likelihood(np.array([1.0]), data, POISSON))


def test_dimension_and_finiteness_errors(rng):
    data = make_instance(rng, 10, 3)
    with pytest.raises(DimensionMismatch):
        gradient(np.zeros(4), data, LOGISTIC)
    with pytest.raises(NonFiniteError):
        neg_log_likelihood(np.array([np.nan, 0, 0]), data, LOGISTIC)
    big = Dataset(np.array([[1e200]]), np.array([0.0]))
    with pytest.raises(NonFiniteError):
        neg_log_likelihood(np.array([1.0]), big, LEAST_SQUARES)
    with pytest.raises(DimensionMismatch):
        Dataset(np.ones((3, 2)), np.ones(2))
    with pytest.raises(NonFiniteError):
        Dataset(np.array([[np.inf]]), np.ones(1))


def test_dataset_is_immutable(rng):
    data = make_instance(rng, 5, 2)
    with pytest.raises(ValueError):
        data.X[0, 0] = 1.0


def test_logistic_labels_checked():
    data = Dataset(np.ones((2, 1)), np.array([0.0, 2.0]))
    with pytest.raises(ValueError):
        data.check_family(LOGISTIC)
