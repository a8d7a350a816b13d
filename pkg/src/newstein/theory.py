"""Parameter suggestions and convergence diagnostics for the Newton-Stein method."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .errors import Degenerate, EmptyInterval, InfeasibleStart

GAMMA_MIN = 1.0
GAMMA_MAX = 1.95


def step_size_suggest(sigma2_hat, p, sample_size, c_fluct=1.0) -> float:
    """Step size 2 / (1 + (s2 - c) / s2) with c = c_fluct * sqrt(p / |S|).

    ``c`` stands in for the sub-sampling bias of the flattened noise level and
    is capped at 0.9 * s2; the result is clamped to [1, 1.95].
    """
    if not sigma2_hat > 0:
        raise ValueError(f"sigma2_hat must be positive, got {sigma2_hat}")
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    if math.isinf(sample_size):
        correction = 0.0
    else:
        correction = min(c_fluct * math.sqrt(p / sample_size), 0.9 * sigma2_hat)
    gamma = 2.0 / (1.0 + (sigma2_hat - correction) / sigma2_hat)
    return float(min(max(gamma, GAMMA_MIN), GAMMA_MAX))


def suggest_sample_size(p: int, n: int, factor: float = 1.0) -> int:
    """min(n, ceil(factor * p ln p)); ``factor`` is the unstated O(.) constant."""
    if p < 2:
        raise ValueError("p must be >= 2")
    return int(min(n, math.ceil(factor * p * math.log(p))))


@dataclass(frozen=True)
class RankSuggestion:
    rank: int
    spectrum: np.ndarray
    relative_gaps: np.ndarray
    warning: Optional[str] = None


def suggest_rank(spectrum) -> RankSuggestion:
    """Pick r at the largest relative eigen-gap (l_i - l_{i+1}) / l_{i+1}.

    Only i in [1, min(p - 1, p // 2)] is searched, so bulk fluctuations at the
    bottom of a noisy spectrum cannot win.
    """
    lam = np.asarray(spectrum, dtype=float).reshape(-1)
    p = lam.size
    if p < 2:
        raise ValueError("spectrum needs at least two eigenvalues")
    if np.any(np.diff(lam) > 1e-12 * max(abs(lam[0]), 1.0)):
        raise ValueError("spectrum must be sorted in descending order")
    top = max(1, min(p - 1, p // 2))
    floor = 1e-300 + 1e-15 * abs(lam[0])
    gaps = (lam[:top] - lam[1:top + 1]) / np.maximum(lam[1:top + 1], floor)
    if np.all(gaps < 1e-9):
        msg = "flat spectrum: no eigen-gap found, using rank 0"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return RankSuggestion(0, lam, gaps, msg)
    return RankSuggestion(int(np.argmax(gaps)) + 1, lam, gaps)


@dataclass(frozen=True)
class ConvergenceFit:
    tau1: float
    tau2: float
    transition_iter: Optional[int]
    r_squared: float
    n_points: int


def fit_composite(errors) -> ConvergenceFit:
    """Fit e_{t+1} ~ tau1 e_t + tau2 e_t^2 by nonnegative least squares.

    Leading positive values are used; the sequence stops at the first
    nonpositive entry (exact convergence).  ``transition_iter`` is the first
    t with tau1 e_t > tau2 e_t^2.
    """
    e = np.asarray(errors, dtype=float).reshape(-1)
    if e.size and np.all(e == 0):
        raise Degenerate("all errors are zero")
    stop = np.flatnonzero(~(e > 0))
    if stop.size:
        e = e[:stop[0]]
    if e.size < 4:
        raise Degenerate(f"need at least 4 positive errors, got {e.size}")
    if not np.all(np.isfinite(e)):
        raise Degenerate("errors must be finite")
    cur, nxt = e[:-1], e[1:]
    A = np.column_stack([cur, cur * cur])
    # column scaling keeps NNLS well conditioned when errors span many decades
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    coef, _ = nnls(A / scale, nxt)
    tau1, tau2 = (coef / scale).tolist()
    resid = nxt - A @ np.array([tau1, tau2])
    ss_tot = float(np.sum((nxt - nxt.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    r2 = float(min(max(r2, 0.0), 1.0))
    lin = tau1 * e
    quad = tau2 * e * e
    hits = np.flatnonzero(lin > quad)
    transition = int(hits[0]) if hits.size else None
    return ConvergenceFit(tau1, tau2, transition, r2, int(e.size))


@dataclass(frozen=True)
class IterationBoundInput:
    tau1: float
    tau2: float
    theta0: float
    eps: float
    grid_points: int = 512


@dataclass(frozen=True)
class IterationBound:
    xi_star: float
    J_star: int
    J_value: float
    quadratic_iters: int
    linear_iters: int


def iteration_terms(xi, tau1, tau2, theta0, eps):
    """Quadratic- and linear-phase iteration counts for a split level ``xi``.

    While e_t > xi, e_{t+1} <= a e_t^2 with a = tau1/xi + tau2, so reaching xi
    takes log2(log(a xi) / log(a theta0)) steps; below xi the contraction
    factor is tau1 + tau2 xi.  Both terms are clipped at zero.
    """
    xi = np.asarray(xi, dtype=float)
    a = tau1 / xi + tau2
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = np.log2(np.log(a * xi) / np.log(a * theta0))
        lin = np.log(eps / xi) / np.log(tau1 + tau2 * xi)
    return np.maximum(quad, 0.0), np.maximum(lin, 0.0)


def iteration_bound(inp: IterationBoundInput) -> IterationBound:
    """Minimise the two-phase iteration count over xi in
    (tau1 theta / (1 - tau2 theta), theta) on a log-spaced grid.

    ``J_star`` counts whole iterations in each phase separately, so it is at
    least ceil(J) at the minimising xi.
    """
    t1, t2, th, eps = inp.tau1, inp.tau2, inp.theta0, inp.eps
    if t1 < 0 or t2 < 0:
        raise ValueError("tau1 and tau2 must be nonnegative")
    if not (0 < eps < th):
        raise ValueError(f"need 0 < eps < theta0, got eps={eps}, theta0={th}")
    if t1 >= 1 or (t2 > 0 and th >= (1 - t1) / t2):
        raise InfeasibleStart(
            f"theta0 = {th:g} must be below (1 - tau1) / tau2 = "
            f"{(1 - t1) / t2 if t2 > 0 else float('inf'):g}"
        )
    lo = t1 * th / (1 - t2 * th)
    hi = th
    if not (lo < hi) or lo <= 0:
        if t1 == 0:
            lo = min(eps, th) * 1e-3
        else:
            raise EmptyInterval(f"xi interval ({lo:g}, {hi:g}) is empty")
    # open interval: stay strictly inside both ends
    grid = np.exp(np.linspace(np.log(lo), np.log(hi), inp.grid_points + 2)[1:-1])
    quad, lin = iteration_terms(grid, t1, t2, th, eps)
    J = quad + lin
    whole = np.ceil(quad) + np.ceil(lin)
    ok = np.isfinite(J)
    if not np.any(ok):
        raise EmptyInterval("iteration count is not finite anywhere on the xi grid")
    whole = np.where(ok, whole, np.inf)
    k = int(np.argmin(whole))
    return IterationBound(
        xi_star=float(grid[k]),
        J_star=int(whole[k]),
        J_value=float(J[k]),
        quadratic_iters=int(np.ceil(quad[k])),
        linear_iters=int(np.ceil(lin[k])),
    )


def simulate_recurrence(tau1, tau2, theta0, eps, max_iter=100_000) -> int:
    """Iterations of e_{t+1} = tau1 e_t + tau2 e_t^2 until e_t <= eps."""
    e = float(theta0)
    t = 0
    while e > eps:
        if t >= max_iter:
            raise RuntimeError("recurrence did not reach eps")
        e = tau1 * e + tau2 * e * e
        t += 1
    return t
