"""Cumulant functions of the exponential families supported by the GLM objective.

Each family carries vectorised evaluators for the cumulant function and its
first four derivatives.  The logistic evaluators are written in terms of
``s = sigmoid(z)`` and ``t = sigmoid(-z)`` so that ``1 - s`` is never formed
by subtraction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Evaluator = Callable[[np.ndarray], np.ndarray]

POISSON_CLAMP = 700.0

# integer codes understood by the compiled kernels; -1 means "use the callables"
CODE_LOGISTIC = 0
CODE_LEAST_SQUARES = 1
CODE_POISSON = 2
CODE_CUSTOM = -1


@dataclass(frozen=True)
class CumulantFamily:
    """A GLM family given by its cumulant function and derivatives.

    ``derivs[k]`` evaluates the k-th derivative elementwise, k = 0..4.
    """

    name: str
    derivs: tuple[Evaluator, Evaluator, Evaluator, Evaluator, Evaluator]
    code: int = CODE_CUSTOM
    within_theory: bool = True
    binary_response: bool = False
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.derivs) != 5:
            raise ValueError("need evaluators for derivative orders 0..4")

    def derivative(self, z, order: int) -> np.ndarray:
        if not 0 <= order <= 4:
            raise ValueError(f"derivative order must be in 0..4, got {order}")
        return self.derivs[order](np.asarray(z, dtype=float))

    def __call__(self, z) -> np.ndarray:
        return self.derivative(z, 0)


def sigmoid(z):
    """Logistic function, evaluated without overflow for any finite input."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _logistic_st(z):
    return sigmoid(z), sigmoid(-np.asarray(z, dtype=float))


def _logistic_d2(z):
    s, t = _logistic_st(z)
    return s * t


def _logistic_d3(z):
    s, t = _logistic_st(z)
    return s * t * (t - s)


def _logistic_d4(z):
    s, t = _logistic_st(z)
    st = s * t
    return st * (1.0 - 6.0 * st)


def _exp_clamped(z):
    return np.exp(np.minimum(np.asarray(z, dtype=float), POISSON_CLAMP))


LOGISTIC = CumulantFamily(
    name="logistic",
    derivs=(_softplus, sigmoid, _logistic_d2, _logistic_d3, _logistic_d4),
    code=CODE_LOGISTIC,
    binary_response=True,
)

LEAST_SQUARES = CumulantFamily(
    name="least_squares",
    derivs=(
        lambda z: np.square(np.asarray(z, dtype=float)),
        lambda z: 2.0 * np.asarray(z, dtype=float),
        lambda z: np.full(np.shape(z), 2.0),
        lambda z: np.zeros(np.shape(z)),
        lambda z: np.zeros(np.shape(z)),
    ),
    code=CODE_LEAST_SQUARES,
)

POISSON = CumulantFamily(
    name="poisson",
    derivs=(_exp_clamped,) * 5,
    code=CODE_POISSON,
    within_theory=False,
    notes="exp cumulant has unbounded derivatives; convergence guarantees do not apply",
)

FAMILIES = {f.name: f for f in (LOGISTIC, LEAST_SQUARES, POISSON)}


def get_family(name) -> CumulantFamily:
    if isinstance(name, CumulantFamily):
        return name
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; choose from {sorted(FAMILIES)}"
        ) from None
