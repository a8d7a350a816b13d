"""Stein-type curvature estimate and its factored inverse.

For Gaussian covariates the expected GLM Hessian is a rank-one update of the
covariance,

    E[x x^T phi''(<x, b>)] = mu2(b) Sigma + mu4(b) Sigma b b^T Sigma,

with mu2 = E[phi''(<x, b>)] and mu4 = E[phi''''(<x, b>)].  The covariance is
estimated once from a sub-sample and denoised by keeping its top ``r``
eigenpairs and flattening the rest of the spectrum to the (r+1)-th
eigenvalue.  The resulting scaling matrix is applied in O(p r) without ever
forming a dense p x p array.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrum, DenominatorNearZero, DimensionMismatch
from .family import get_family
from .glm import Dataset, _as_beta, evaluate

SIGMA2_FLOOR = 1e-12
GUARD_REL = 1e-8


@dataclass(frozen=True)
class SampleCovariance:
    M: np.ndarray
    sample_count: int
    indices: np.ndarray = field(repr=False, compare=False)


def _rows(d, v):
    # scale rows of U^T v whether v is a vector or a matrix
    return d if np.ndim(v) == 1 else d[:, None]


@dataclass(frozen=True)
class ThresholdedCovariance:
    """sigma2_hat * I + U diag(eigvals - sigma2_hat) U^T, stored factored."""

    sigma2_hat: float
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def p(self) -> int:
        return self.eigvecs.shape[0]

    @property
    def rank(self) -> int:
        return self.eigvecs.shape[1]

    def apply(self, v):
        U = self.eigvecs
        d = self.eigvals - self.sigma2_hat
        return self.sigma2_hat * v + U @ (_rows(d, v) * (U.T @ v))

    def solve(self, v):
        """Apply the inverse: v / s2 + U diag(1/lambda - 1/s2) U^T v."""
        U = self.eigvecs
        s2 = self.sigma2_hat
        d = 1.0 / self.eigvals - 1.0 / s2
        return v / s2 + U @ (_rows(d, v) * (U.T @ v))

    def dense(self):
        U = self.eigvecs
        D = self.sigma2_hat * np.eye(self.p) + (U * (self.eigvals - self.sigma2_hat)) @ U.T
        return 0.5 * (D + D.T)

    def spectrum(self):
        """Full spectrum in descending order."""
        rest = np.full(self.p - self.rank, self.sigma2_hat)
        return np.concatenate([self.eigvals, rest])


@dataclass(frozen=True)
class SteinScaling:
    """Factored scaling matrix

        Q = (1/mu2) [zeta^{-1} - b b^T / (mu2/mu4 + <zeta b, b>)]

    stored as ``zeta^{-1} / mu2 - coef * b b^T`` with
    ``coef = mu4 / (mu2 (mu2 + mu4 <zeta b, b>))``, which needs no division by
    mu4 and is exactly zero when mu4 = 0.
    """

    mu2_hat: float
    mu4_hat: float
    beta_ref: np.ndarray
    cov: ThresholdedCovariance
    coef: float
    warnings: tuple = ()

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.cov.p,):
            raise DimensionMismatch(f"vector has shape {v.shape}, expected ({self.cov.p},)")
        out = self.cov.solve(v) / self.mu2_hat
        if self.coef != 0.0:
            out -= self.coef * float(self.beta_ref @ v) * self.beta_ref
        return out

    def dense(self):
        Q = self.cov.solve(np.eye(self.cov.p)) / self.mu2_hat
        Q -= self.coef * np.outer(self.beta_ref, self.beta_ref)
        return 0.5 * (Q + Q.T)


def subsample_covariance(data: Dataset, sample_size: int, seed=0) -> SampleCovariance:
    """Uncentred second-moment matrix of a uniform sub-sample of rows.

    Normalised by 1/|S|.  Selected rows are summed in ascending index order.
    """
    n = data.n
    if not 1 <= sample_size <= n:
        raise ValueError(f"sample_size must be in [1, {n}], got {sample_size}")
    if sample_size == n:
        idx = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=sample_size, replace=False))
    Xs = data.X[idx]
    M = Xs.T @ Xs / sample_size
    M = 0.5 * (M + M.T)
    M.flags.writeable = False
    return SampleCovariance(M=M, sample_count=int(sample_size), indices=idx)


def eigen_threshold(cov, r: int) -> ThresholdedCovariance:
    """Keep the r largest eigenpairs; flatten the rest to lambda_{r+1}."""
    M = cov.M if isinstance(cov, SampleCovariance) else np.asarray(cov, dtype=float)
    p = M.shape[0]
    if not 0 <= r <= p - 1:
        raise ValueError(f"rank must be in [0, {p - 1}], got {r}")
    w, V = scipy.linalg.eigh(M, subset_by_index=[p - r - 1, p - 1])
    if w.size != r + 1:
        # partial solvers can drop members of a tight cluster; use the full one
        w, V = np.linalg.eigh(M)
        w, V = w[p - r - 1:], V[:, p - r - 1:]
    w = w[::-1]
    V = V[:, ::-1]
    sigma2 = float(w[r])
    if sigma2 <= SIGMA2_FLOOR:
        raise DegenerateSpectrum(
            f"(r+1)-th eigenvalue {sigma2:.3e} is too small to invert (r = {r})"
        )
    # fix eigenvector signs so repeated calls give identical factors
    U = np.ascontiguousarray(V[:, :r])
    if r:
        flip = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(r)])
        U = U * flip
    return ThresholdedCovariance(sigma2_hat=sigma2, eigvals=w[:r].copy(), eigvecs=U)


def mu_hat(beta, data: Dataset, fam, order: int) -> float:
    """Average of phi^(order)(<x_i, beta>) over all n rows (order 2 or 4)."""
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    ev = evaluate(beta, data, fam, want_grad=False)
    return ev.mu2 if order == 2 else ev.mu4


def build_scaling(cov: ThresholdedCovariance, mu2, mu4, beta, on_guard="raise",
                  guard_rel=GUARD_REL) -> SteinScaling:
    """Assemble the factored scaling matrix at ``beta``.

    The rank-one term needs |mu2 + mu4 <zeta beta, beta>| > guard_rel * mu2.
    When that fails, ``on_guard="raise"`` raises DenominatorNearZero and
    ``on_guard="fallback"`` drops the rank-one term and records a warning.
    """
    beta = _as_beta(beta, cov.p)
    mu2 = float(mu2)
    mu4 = float(mu4)
    if not mu2 > 0:
        raise ValueError(f"mu2 must be positive, got {mu2}")
    warnings = ()
    coef = 0.0
    if mu4 != 0.0:
        q = float(cov.apply(beta) @ beta)
        denom = mu2 + mu4 * q
        if abs(denom) > guard_rel * mu2:
            coef = mu4 / (mu2 * denom)
        elif on_guard == "raise":
            raise DenominatorNearZero(
                f"|mu2 + mu4 <zeta b, b>| = {abs(denom):.3e} <= {guard_rel * mu2:.3e}"
            )
        else:
            warnings = (f"denominator guard failed ({denom:.3e}); rank-one term dropped",)
    beta = beta.copy()
    beta.flags.writeable = False
    return SteinScaling(mu2, mu4, beta, cov, coef, warnings)


def apply_scaling(Q: SteinScaling, v) -> np.ndarray:
    return Q.apply(v)


def stein_expectation_check(Sigma, beta, fam, mc_samples: int, seed=0,
                            covariance="population", chunk_size=100_000) -> float:
    """Relative spectral error of the Stein identity under Monte-Carlo sampling.

    Draws x ~ N(0, Sigma) and compares mean[x x^T f(<x, beta>)] with
    mu2 * C + mu4 * C beta beta^T C, where f is the family's second
    derivative, mu2 and mu4 are sample means of f and f'', and C is either the
    true ``Sigma`` (``covariance="population"``) or the second-moment matrix of
    the same draws (``covariance="sample"``, the estimator used in practice).
    """
    fam = get_family(fam)
    Sigma = np.asarray(Sigma, dtype=float)
    p = Sigma.shape[0]
    beta = _as_beta(beta, p)
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    if covariance not in ("population", "sample"):
        raise ValueError(f"covariance must be 'population' or 'sample', got {covariance!r}")
    try:
        L = np.linalg.cholesky(0.5 * (Sigma + Sigma.T))
    except np.linalg.LinAlgError:
        raise ValueError("Sigma must be positive definite") from None

    rng = np.random.default_rng(seed)
    lhs = np.zeros((p, p))
    second = np.zeros((p, p))
    s2 = s4 = 0.0
    done = 0
    while done < mc_samples:
        m = min(chunk_size, mc_samples - done)
        x = rng.standard_normal((m, p)) @ L.T
        z = x @ beta
        f2 = fam.derivative(z, 2)
        lhs += (x * f2[:, None]).T @ x
        if covariance == "sample":
            second += x.T @ x
        s2 += float(np.sum(f2))
        s4 += float(np.sum(fam.derivative(z, 4)))
        done += m
    lhs /= mc_samples
    C = second / mc_samples if covariance == "sample" else Sigma
    Cb = C @ beta
    rhs = (s2 / mc_samples) * C + (s4 / mc_samples) * np.outer(Cb, Cb)
    return float(np.linalg.norm(lhs - rhs, 2) / np.linalg.norm(rhs, 2))
