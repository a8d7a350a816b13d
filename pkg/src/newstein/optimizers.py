"""Newton-Stein iteration and the baseline optimizers it is compared against.

Every method runs through the same driver: evaluate at the current iterate,
ask the method for the next iterate, record one :class:`IterRecord`, and stop
once ``||beta_{t+1} - beta_t||_2 <= tol_eps`` (or the gradient norm, when
``stop_on="grad"``).  A record with index t holds the objective and gradient
norm at beta_t and the length of the step taken from it, so a run that
converges on its first step ends at t = 0.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigError, NonFiniteError, SingularHessian
from .family import get_family
from .glm import Dataset, _as_beta, evaluate, hessian, hessian_vector
from .stein import build_scaling, eigen_threshold, subsample_covariance
from .theory import step_size_suggest, suggest_rank, suggest_sample_size

METHODS = ("newst", "newton", "gd", "agd", "bfgs", "lbfgs")
BASELINES = METHODS[1:]

COND_LIMIT = 1e14


@dataclass
class OptimizerConfig:
    method: str = "newst"
    gamma: Optional[float] = None
    sample_size: Optional[int] = None
    sample_factor: float = 1.0
    rank: Optional[int] = None
    c_fluct: float = 1.0
    tol_eps: float = 1e-8
    radius_R: float = 1e6
    max_iter: int = 1000
    seed: int = 0
    lbfgs_memory: int = 10
    resample_every: int = 0
    stop_on: str = "step"
    grad_tol: Optional[float] = None
    line_search: Optional[str] = None
    momentum: Optional[float] = None
    keep_iterates: bool = False
    backend: Optional[str] = None

    def validate(self, n: int, p: int) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.tol_eps > 0:
            raise ConfigError("tol_eps must be positive")
        if not self.radius_R > 0:
            raise ConfigError("radius_R must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.lbfgs_memory < 1:
            raise ConfigError("lbfgs_memory must be >= 1")
        if self.resample_every < 0:
            raise ConfigError("resample_every must be >= 0")
        if self.stop_on not in ("step", "grad"):
            raise ConfigError("stop_on must be 'step' or 'grad'")
        if self.line_search not in (None, "armijo"):
            raise ConfigError("line_search must be None or 'armijo'")
        if self.sample_size is not None and not 1 <= self.sample_size <= n:
            raise ConfigError(f"sample_size must be in [1, {n}]")
        if self.rank is not None and not 0 <= self.rank < p:
            raise ConfigError(f"rank must be in [0, {p - 1}]")

    def with_(self, **kw) -> "OptimizerConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class IterRecord:
    t: int
    objective: float
    grad_norm: float
    step_norm: float
    elapsed_seconds: float
    projected: bool = False
    warnings: tuple = ()


@dataclass
class IterationTrace:
    method: str
    records: list = field(default_factory=list)
    beta: Optional[np.ndarray] = None
    termination: str = "running"
    tol_eps: float = float("nan")
    params: dict = field(default_factory=dict)
    iterates: Optional[list] = None

    @property
    def iterations(self) -> int:
        if not self.records:
            raise IndexError("empty trace")
        return self.records[-1].t

    @property
    def elapsed_seconds(self) -> float:
        return float(sum(r.elapsed_seconds for r in self.records))

    @property
    def warnings(self) -> list:
        return [w for r in self.records for w in r.warnings]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def same_numbers(self, other: "IterationTrace") -> bool:
        """Equality ignoring wall-clock columns."""
        strip = lambda tr: [replace(r, elapsed_seconds=0.0) for r in tr.records]
        return (
            self.method == other.method
            and self.termination == other.termination
            and strip(self) == strip(other)
            and np.array_equal(self.beta, other.beta)
        )

    def __eq__(self, other):
        if not isinstance(other, IterationTrace):
            return NotImplemented
        return (
            self.method == other.method
            and self.termination == other.termination
            and self.records == other.records
            and np.array_equal(self.beta, other.beta)
        )


def grad_norm_at(trace: IterationTrace, t: int) -> float:
    if not trace.records:
        raise IndexError("empty trace")
    if t < 0:
        t = trace.records[-1].t + 1 + t
    for rec in trace.records:
        if rec.t == t:
            return rec.grad_norm
    raise IndexError(f"iteration {t} not in trace (0..{trace.records[-1].t})")


def project_ball(beta, R: float) -> np.ndarray:
    """Euclidean projection onto the ball of radius R."""
    if not R > 0:
        raise ValueError("radius must be positive")
    beta = np.asarray(beta, dtype=float)
    nrm = float(np.linalg.norm(beta))
    if nrm <= R:
        return beta.copy()
    return beta * (R / nrm)


def bfgs_update(H, s, y):
    """Inverse-Hessian BFGS update; the result satisfies H_new @ y = s.

    Returns None when the curvature condition y^T s > 0 fails.
    """
    sy = float(s @ y)
    if not sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
        return None
    rho = 1.0 / sy
    Hy = H @ y
    # (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
    H_new = (
        H
        - rho * (np.outer(s, Hy) + np.outer(Hy, s))
        + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
    )
    return 0.5 * (H_new + H_new.T)


def lbfgs_direction(g, pairs) -> np.ndarray:
    """Two-loop recursion: returns H_k g for the stored (s, y, rho) pairs."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def lipschitz_estimate(beta, data: Dataset, fam) -> float:
    """Largest Hessian eigenvalue at ``beta``."""
    p = data.p
    if p <= 200:
        return float(np.linalg.eigvalsh(hessian(beta, data, fam))[-1])
    op = spla.LinearOperator(
        (p, p), matvec=lambda v: hessian_vector(beta, v, data, fam), dtype=float
    )
    v0 = np.ones(p) / math.sqrt(p)
    return float(spla.eigsh(op, k=1, which="LA", v0=v0, return_eigenvectors=False)[0])


class _Method:
    name = ""

    def __init__(self, data, fam, cfg):
        self.data = data
        self.fam = fam
        self.cfg = cfg
        self.params = {}

    def setup(self, beta0):
        pass

    def objective(self, beta):
        return evaluate(beta, self.data, self.fam, want_grad=False,
                        backend=self.cfg.backend).objective

    def armijo(self, beta, f0, g, d, alpha):
        slope = float(g @ d)
        for _ in range(40):
            cand = beta + alpha * d
            try:
                if self.objective(cand) <= f0 + 1e-4 * alpha * slope:
                    return cand
            except NonFiniteError:
                pass
            alpha *= 0.5
        return beta + alpha * d

    def move(self, beta, ev, d):
        """beta + gamma d, or an Armijo-backtracked step when configured."""
        if self.cfg.line_search == "armijo":
            if float(ev.gradient @ d) >= 0:
                d = -ev.gradient
            return self.armijo(beta, ev.objective, ev.gradient, d, self.gamma)
        return beta + self.gamma * d

    def step(self, t, beta, ev):
        raise NotImplementedError


class _NewtonStein(_Method):
    name = "newst"

    def _sketch(self, seed):
        cov = subsample_covariance(self.data, self.sample_size, seed)
        if self.rank is None:
            spec = np.linalg.eigvalsh(cov.M)[::-1]
            self.rank = suggest_rank(spec).rank
        self.zeta = eigen_threshold(cov, self.rank)

    def setup(self, beta0):
        cfg, data = self.cfg, self.data
        self.sample_size = cfg.sample_size or suggest_sample_size(
            max(data.p, 2), data.n, cfg.sample_factor
        )
        self.rank = cfg.rank
        self._sketch(cfg.seed)
        self.gamma = cfg.gamma or step_size_suggest(
            self.zeta.sigma2_hat, data.p, self.sample_size, cfg.c_fluct
        )
        self.params = {
            "gamma": self.gamma,
            "sample_size": self.sample_size,
            "rank": self.rank,
            "sigma2_hat": self.zeta.sigma2_hat,
        }

    def step(self, t, beta, ev):
        every = self.cfg.resample_every
        if every and t > 0 and t % every == 0:
            self._sketch(self.cfg.seed + t)
        Q = build_scaling(self.zeta, ev.mu2, ev.mu4, beta, on_guard="fallback")
        return beta - self.gamma * Q.apply(ev.gradient), Q.warnings


class _Newton(_Method):
    name = "newton"

    def setup(self, beta0):
        self.gamma = self.cfg.gamma or 1.0
        self.params = {"gamma": self.gamma}

    def step(self, t, beta, ev):
        H = hessian(beta, self.data, self.fam)
        w, V = np.linalg.eigh(H)
        cond = float(w[-1] / w[0]) if w[0] > 0 else float("inf")
        if not cond < COND_LIMIT:
            raise SingularHessian(
                f"Hessian at iteration {t} is singular (condition number {cond:.3e})",
                cond,
            )
        d = -(V @ ((V.T @ ev.gradient) / w))
        return self.move(beta, ev, d), ()


class _GradientDescent(_Method):
    name = "gd"

    def setup(self, beta0):
        if self.cfg.gamma is None:
            L = lipschitz_estimate(beta0, self.data, self.fam)
            self.gamma = 1.0 / L
        else:
            self.gamma = self.cfg.gamma
        self.params = {"gamma": self.gamma}

    def step(self, t, beta, ev):
        return self.move(beta, ev, -ev.gradient), ()


class _Nesterov(_GradientDescent):
    name = "agd"

    def setup(self, beta0):
        super().setup(beta0)
        self.prev = None

    def step(self, t, beta, ev):
        if self.prev is None:
            y = beta
            gy = ev.gradient
        else:
            mom = self.cfg.momentum if self.cfg.momentum is not None else t / (t + 3.0)
            y = beta + mom * (beta - self.prev)
            gy = evaluate(y, self.data, self.fam, backend=self.cfg.backend).gradient
        self.prev = beta
        return y - self.gamma * gy, ()


class _BFGS(_Method):
    name = "bfgs"

    def setup(self, beta0):
        self.gamma = self.cfg.gamma or 1.0
        # first step uses H0 = I / L; later steps rescale by s^T y / y^T y
        self.h0 = 1.0 / lipschitz_estimate(beta0, self.data, self.fam)
        self.params = {"gamma": self.gamma, "h0": self.h0}
        self.H = None
        self.last = None

    def _update(self, s, y):
        if self.H is None:
            self.H = (float(s @ y) / float(y @ y)) * np.eye(len(s))
        H = bfgs_update(self.H, s, y)
        if H is None:
            return ("curvature condition failed; BFGS update skipped",)
        self.H = H
        return ()

    def step(self, t, beta, ev):
        warns = ()
        if self.last is not None:
            s = beta - self.last[0]
            y = ev.gradient - self.last[1]
            if float(y @ y) > 0:
                warns = self._update(s, y)
        self.last = (beta, ev.gradient)
        d = -(self.H @ ev.gradient) if self.H is not None else -self.h0 * ev.gradient
        return self.move(beta, ev, d), warns


class _LBFGS(_Method):
    name = "lbfgs"

    def setup(self, beta0):
        self.gamma = self.cfg.gamma or 1.0
        self.h0 = 1.0 / lipschitz_estimate(beta0, self.data, self.fam)
        self.params = {"gamma": self.gamma, "memory": self.cfg.lbfgs_memory, "h0": self.h0}
        self.pairs = deque(maxlen=self.cfg.lbfgs_memory)
        self.last = None

    def step(self, t, beta, ev):
        warns = ()
        if self.last is not None:
            s = beta - self.last[0]
            y = ev.gradient - self.last[1]
            sy = float(s @ y)
            if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
                self.pairs.append((s, y, 1.0 / sy))
            else:
                warns = ("curvature condition failed; pair discarded",)
        self.last = (beta, ev.gradient)
        if self.pairs:
            d = -lbfgs_direction(ev.gradient, list(self.pairs))
        else:
            d = -self.h0 * ev.gradient
        return self.move(beta, ev, d), warns


_IMPL = {
    cls.name: cls
    for cls in (_NewtonStein, _Newton, _GradientDescent, _Nesterov, _BFGS, _LBFGS)
}


def _drive(data: Dataset, fam, beta0, cfg: OptimizerConfig, project: bool) -> IterationTrace:
    fam = get_family(fam)
    data.check_family(fam)
    cfg.validate(data.n, data.p)
    beta = _as_beta(beta0 if beta0 is not None else np.zeros(data.p), data.p).copy()
    trace = IterationTrace(method=cfg.method, tol_eps=cfg.tol_eps)
    if cfg.keep_iterates:
        trace.iterates = [beta.copy()]

    method = _IMPL[cfg.method](data, fam, cfg)
    clock = time.perf_counter()
    method.setup(beta)
    trace.params = dict(method.params)
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else cfg.tol_eps

    t = 0
    while True:
        try:
            ev = evaluate(beta, data, fam, backend=cfg.backend)
        except NonFiniteError as exc:
            trace.records.append(IterRecord(t, float("nan"), float("nan"), float("nan"),
                                            time.perf_counter() - clock, False, (str(exc),)))
            trace.termination = "diverged"
            break
        gnorm = float(np.linalg.norm(ev.gradient))
        if cfg.stop_on == "grad" and gnorm <= grad_tol:
            trace.records.append(IterRecord(t, ev.objective, gnorm, 0.0,
                                            time.perf_counter() - clock))
            trace.termination = "converged"
            break
        try:
            new, warns = method.step(t, beta, ev)
        except (NonFiniteError, ValueError) as exc:
            # e.g. mu2 underflowing to zero far from the optimum
            trace.records.append(IterRecord(t, ev.objective, gnorm, float("nan"),
                                            time.perf_counter() - clock, False, (str(exc),)))
            trace.termination = "diverged"
            break
        projected = False
        if project:
            projected = bool(np.linalg.norm(new) > cfg.radius_R)
            if projected:
                new = project_ball(new, cfg.radius_R)
        step = float(np.linalg.norm(new - beta))
        now = time.perf_counter()
        trace.records.append(IterRecord(t, ev.objective, gnorm, step, now - clock,
                                        projected, tuple(warns)))
        clock = now
        if not np.all(np.isfinite(new)):
            trace.termination = "diverged"
            break
        beta = new
        if cfg.keep_iterates:
            trace.iterates.append(beta.copy())
        if cfg.stop_on == "step" and step <= cfg.tol_eps:
            trace.termination = "converged"
            break
        t += 1
        if t >= cfg.max_iter:
            trace.termination = "max_iter"
            break
    trace.beta = beta
    return trace


def newst_optimize(data: Dataset, fam, beta0=None, cfg: Optional[OptimizerConfig] = None):
    """Run the Newton-Stein iteration with ball projection."""
    cfg = cfg or OptimizerConfig(method="newst")
    if cfg.method != "newst":
        raise ConfigError(f"newst_optimize needs method='newst', got {cfg.method!r}")
    return _drive(data, fam, beta0, cfg, project=True)


def baseline_optimize(data: Dataset, fam, beta0=None, cfg: Optional[OptimizerConfig] = None):
    if cfg is None or cfg.method not in BASELINES:
        raise ConfigError(f"baseline_optimize needs method in {BASELINES}")
    return _drive(data, fam, beta0, cfg, project=False)


def optimize(data: Dataset, fam, beta0=None, cfg: Optional[OptimizerConfig] = None):
    cfg = cfg or OptimizerConfig()
    if cfg.method == "newst":
        return newst_optimize(data, fam, beta0, cfg)
    return baseline_optimize(data, fam, beta0, cfg)
