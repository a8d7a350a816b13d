"""GLM negative log-likelihood, gradient and exact Hessian.

All quantities are averages over the n observations:

    l(beta)        = (1/n) sum_i [phi(<x_i, beta>) - y_i <x_i, beta>]
    grad l(beta)   = (1/n) sum_i [phi'(<x_i, beta>) - y_i] x_i
    hess l(beta)   = (1/n) sum_i phi''(<x_i, beta>) x_i x_i^T

The row sweep is delegated to :mod:`newstein.kernels`; each call is a pure
function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NonFiniteError
from .family import CumulantFamily, get_family


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``y`` (n,).

    Arrays are copied to C-contiguous float64 and marked read-only.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: Optional[Sequence[str]] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, order="C", copy=True)
        y = np.array(self.y, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim != 2:
            raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DimensionMismatch(f"need n >= 1 and p >= 1, got {X.shape}")
        if y.shape[0] != n:
            raise DimensionMismatch(f"X has {n} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFiniteError("dataset contains non-finite entries")
        if self.feature_names is not None and len(self.feature_names) != p:
            raise DimensionMismatch("feature_names length must equal p")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def check_family(self, family) -> None:
        family = get_family(family)
        if family.binary_response and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError(f"{family.name} family needs labels in {{0, 1}}")


class GLMEval(NamedTuple):
    objective: float
    gradient: Optional[np.ndarray]
    mu2: float
    mu4: float


def _as_beta(beta, p: int) -> np.ndarray:
    beta = np.ascontiguousarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != p:
        raise DimensionMismatch(f"beta has length {beta.shape[0]}, data has p = {p}")
    if not np.all(np.isfinite(beta)):
        raise NonFiniteError("beta contains non-finite entries")
    return beta


def evaluate(beta, data: Dataset, fam, want_grad=True, backend=None) -> GLMEval:
    """Objective, gradient and the two curvature averages in one sweep."""
    fam = get_family(fam)
    beta = _as_beta(beta, data.p)
    obj, grad, m2, m4 = kernels.glm_pass(data.X, beta, data.y, fam, want_grad, backend)
    n = data.n
    obj /= n
    m2 /= n
    m4 /= n
    if want_grad:
        grad /= n
    if not (np.isfinite(obj) and np.isfinite(m2) and np.isfinite(m4)):
        raise NonFiniteError(f"non-finite GLM quantity at current beta (objective={obj})")
    if want_grad and not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient")
    return GLMEval(obj, grad, m2, m4)


def neg_log_likelihood(beta, data: Dataset, fam: CumulantFamily, backend=None) -> float:
    return evaluate(beta, data, fam, want_grad=False, backend=backend).objective


def gradient(beta, data: Dataset, fam: CumulantFamily, backend=None) -> np.ndarray:
    return evaluate(beta, data, fam, backend=backend).gradient


def hessian(beta, data: Dataset, fam: CumulantFamily) -> np.ndarray:
    """Dense p x p Hessian; only sensible when p is small enough to densify."""
    fam = get_family(fam)
    beta = _as_beta(beta, data.p)
    w = fam.derivative(data.X @ beta, 2)
    if not np.all(np.isfinite(w)):
        raise NonFiniteError("non-finite curvature weights")
    H = (data.X * w[:, None]).T @ data.X / data.n
    return 0.5 * (H + H.T)


def hessian_vector(beta, v, data: Dataset, fam: CumulantFamily) -> np.ndarray:
    fam = get_family(fam)
    beta = _as_beta(beta, data.p)
    w = fam.derivative(data.X @ beta, 2)
    return data.X.T @ (w * (data.X @ v)) / data.n
