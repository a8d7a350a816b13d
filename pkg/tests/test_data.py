import json
import math

import numpy as np
import pytest

from newstein import (Dataset, ParseError, SpikedModelSpec, generate_spiked, load_dataset,
                      save_dataset, standardize)
from newstein.data import (load_metadata, map_binary_labels, metadata_path, random_orthogonal,
                           spiked_covariance)


def test_spec_defaults_and_validation():
    spec = SpikedModelSpec()
    assert (spec.n, spec.p, spec.r) == (50_000, 100, 3)
    assert spec.theta == pytest.approx([100.0, math.sqrt(1000), 10.0])
    S3 = SpikedModelSpec(n=500_000, p=300, r=3)
    assert S3.validate() is None
    for bad in (dict(r=5, p=5), dict(r=2, theta=[1.0, 2.0]), dict(r=1, theta=[-1.0]),
                dict(sigma2=0.0), dict(r=1, theta=[1.0, 2.0]), dict(family="probit")):
        with pytest.raises(ValueError):
            SpikedModelSpec(**bad)


def test_covariance_spectrum_exact():
    spec = SpikedModelSpec(n=10, p=12, r=3, theta=(30, 20, 6), sigma2=2.0, seed=4)
    M, lam, Sigma = spiked_covariance(spec)
    np.testing.assert_allclose(M.T @ M, np.eye(12), atol=1e-10)
    expected = np.sort([32.0, 22.0, 8.0] + [2.0] * 9)
    np.testing.assert_allclose(np.linalg.eigvalsh(Sigma), expected, rtol=1e-12)


def test_random_orthogonal_is_haar_like():
    rng = np.random.default_rng(0)
    # mean of a fixed entry over Haar draws is 0; sign-fixing removes the QR bias
    vals = [random_orthogonal(3, rng)[0, 0] for _ in range(4000)]
    assert abs(np.mean(vals)) < 0.03


def test_isotropic_covariance_monte_carlo():
    data = generate_spiked(SpikedModelSpec(n=1_000_000, p=10, r=0, seed=2))
    C = data.X.T @ data.X / data.n
    assert np.linalg.norm(C - np.eye(10), 2) < 0.02


def test_covariance_concentration():
    p, n = 20, 4000
    for seed in range(20):
        spec = SpikedModelSpec(n=n, p=p, r=3, seed=seed)
        _, lam, Sigma = spiked_covariance(spec)
        X = generate_spiked(spec).X
        err = np.linalg.norm(X.T @ X / n - Sigma, 2)
        assert err < 3 * math.sqrt(p / n) * lam.max()


def test_generator_determinism_and_meta():
    spec = SpikedModelSpec(n=300, p=8, r=2, seed=7)
    a, b = generate_spiked(spec), generate_spiked(spec)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert a.meta["generator"]["seed"] == 7
    assert np.linalg.norm(a.meta["beta_true"]) == pytest.approx(1.0)
    assert set(np.unique(a.y)) <= {0.0, 1.0}
    c = generate_spiked(SpikedModelSpec(n=300, p=8, r=2, seed=8))
    assert not np.array_equal(a.X, c.X)


def test_least_squares_response_model():
    spec = SpikedModelSpec(n=100_000, p=5, r=1, theta=[4.0], seed=1, family="least_squares")
    data = generate_spiked(spec)
    beta = np.asarray(data.meta["beta_true"])
    resid = data.y - 2 * data.X @ beta
    assert abs(resid.mean()) < 0.02 and abs(resid.std() - 1) < 0.02


def test_load_small_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("1,0,1\n0,1,0\n")
    data = load_dataset(path, label_column=2)
    assert (data.n, data.p) == (2, 2)
    np.testing.assert_array_equal(data.y, [1, 0])


def test_load_csv_header_and_named_label(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b,label\n1.5,2,-1\n3,4,1\n")
    data = load_dataset(path, label_column="label")
    assert data.feature_names == ["a", "b"]
    np.testing.assert_array_equal(data.y, [0, 1])


def test_load_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0,1\n0,oops,0\n")
    with pytest.raises(ParseError) as err:
        load_dataset(bad)
    assert err.value.line == 2 and "line 2" in str(err.value)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,0,1\n0,1\n")
    with pytest.raises(ParseError, match="line 2"):
        load_dataset(ragged)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_dataset(empty)


def test_load_libsvm(tmp_path):
    path = tmp_path / "d.svm"
    path.write_text("+1 1:0.5 3:2\n-1 2:1 # comment\n\n+1 3:-1\n")
    data = load_dataset(path, format="libsvm")
    np.testing.assert_array_equal(data.X, [[0.5, 0, 2], [0, 1, 0], [0, 0, -1]])
    np.testing.assert_array_equal(data.y, [1, 0, 1])
    assert load_dataset(path, format="libsvm", n_features=5).p == 5
    path.write_text("1 0:3\n")
    with pytest.raises(ParseError):
        load_dataset(path, format="libsvm")
    path.write_text("1 a\n")
    with pytest.raises(ParseError):
        load_dataset(path, format="libsvm")


def test_label_mapping():
    assert map_binary_labels([1, 2, 2])[0].tolist() == [0, 1, 1]
    assert map_binary_labels([-1, 1])[0].tolist() == [0, 1]
    y, how = map_binary_labels([1, 2, 3, 7, 2], positive_class=2)
    assert y.tolist() == [0, 1, 0, 0, 1] and "vs rest" in how
    with pytest.raises(ValueError):
        map_binary_labels([1, 2, 3])


def test_least_squares_labels_untouched(tmp_path):
    path = tmp_path / "ls.csv"
    path.write_text("1,2.5\n2,-3.25\n")
    assert load_dataset(path, family="least_squares").y.tolist() == [2.5, -3.25]


def test_standardize_moments_and_idempotence():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 5)) * [1, 10, 0.1, 3, 100] + [5, -2, 0, 1e3, 7]
    data = Dataset(X, np.zeros(300))
    out, params = standardize(data)
    assert np.all(np.abs(out.X.mean(axis=0)) < 1e-12)
    assert np.all(np.abs(out.X.std(axis=0) - 1) < 1e-9)
    again, _ = standardize(out)
    np.testing.assert_allclose(again.X, out.X, atol=1e-12)
    np.testing.assert_allclose(params.apply(data).X, out.X, rtol=0, atol=0)
    assert out.meta["standardization"]["mean"] == pytest.approx(X.mean(axis=0).tolist())


def test_standardize_constant_column():
    X = np.column_stack([np.full(4, 3.0), np.arange(4.0)])
    with pytest.warns(RuntimeWarning):
        out, params = standardize(Dataset(X, np.zeros(4)))
    assert params.constant_columns == (0,) and params.scale[0] == 1.0
    np.testing.assert_array_equal(out.X[:, 0], 0.0)
    with pytest.raises(ValueError):
        standardize(Dataset(np.ones((1, 2)), np.zeros(1)))


def test_round_trip_bit_exact(tmp_path):
    data = generate_spiked(SpikedModelSpec(n=200, p=6, r=2, seed=3))
    path = save_dataset(data, tmp_path / "sub" / "s.csv")
    back = load_dataset(path)
    assert back.X.tobytes() == data.X.tobytes()
    assert back.y.tobytes() == data.y.tobytes()
    meta = load_metadata(path)
    assert meta["generator"]["seed"] == 3 and meta["n"] == 200
    assert metadata_path(path).name == "s.meta.json"
    assert json.loads(metadata_path(path).read_text()) == meta
    assert load_metadata(tmp_path / "nothing.csv") == {}
