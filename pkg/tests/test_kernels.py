import numpy as np
import pytest

from conftest import make_instance
from newstein import kernels
from newstein.family import FAMILIES, CumulantFamily, LOGISTIC

pytestmark = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                reason="compiled kernels not built")


@pytest.mark.parametrize("name", sorted(FAMILIES))
@pytest.mark.parametrize("want_grad", [True, False])
def test_backends_agree(rng, name, want_grad):
    fam = FAMILIES[name]
    data = make_instance(rng, 301, 17, name)
    beta = rng.standard_normal(17) * 0.3
    a = kernels.glm_pass(data.X, beta, data.y, fam, want_grad, backend="cython")
    b = kernels.glm_pass(data.X, beta, data.y, fam, want_grad, backend="python")
    for x, y in zip(a, b):
        if x is None:
            assert y is None
        else:
            np.testing.assert_allclose(x, y, rtol=1e-11, atol=1e-12)


def test_extreme_margins_agree():
    X = np.array([[800.0, 0.0], [-800.0, 1.0], [0.0, 1e-3]])
    y = np.array([0.0, 1.0, 1.0])
    beta = np.array([1.0, 0.5])
    a = kernels.glm_pass(X, beta, y, LOGISTIC, backend="cython")
    b = kernels.glm_pass(X, beta, y, LOGISTIC, backend="python")
    assert np.isfinite(a[0])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-14)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-14, atol=1e-300)


def test_custom_family_uses_numpy_path(rng):
    sq = lambda z: np.asarray(z) ** 2
    fam = CumulantFamily("custom", (sq, lambda z: 2 * np.asarray(z),
                                    lambda z: np.full_like(z, 2.0),
                                    np.zeros_like, np.zeros_like))
    data = make_instance(rng, 20, 3, "least_squares")
    beta = rng.standard_normal(3)
    a = kernels.glm_pass(data.X, beta, data.y, fam, backend="cython")
    b = kernels.glm_pass(data.X, beta, data.y, FAMILIES["least_squares"], backend="python")
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)


def test_unknown_backend(rng):
    data = make_instance(rng, 4, 2)
    with pytest.raises(ValueError):
        kernels.glm_pass(data.X, np.zeros(2), data.y, LOGISTIC, backend="fortran")
