import sys

import numpy as np
import pytest

from newstein import Dataset, kernels
from newstein.family import sigmoid


def make_instance(rng, n, p, family="logistic", scale=1.0):
    X = rng.standard_normal((n, p)) * scale
    beta = rng.standard_normal(p) / np.sqrt(p)
    eta = X @ beta
    if family == "logistic":
        y = (rng.random(n) < sigmoid(eta)).astype(float)
    elif family == "least_squares":
        y = 2 * eta + rng.standard_normal(n)
    else:
        y = rng.poisson(np.exp(np.clip(eta, -5, 5))).astype(float)
    return Dataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
