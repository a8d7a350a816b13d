"""Backend selection for the per-iteration GLM sweep.

The compiled extension is used when it imports and the family is one of the
built-in ones; custom families always take the NumPy path.  Setting
``NEWSTEIN_PURE_PYTHON=1`` forces the NumPy path globally.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from .family import CODE_CUSTOM

try:
    from . import _kernels as _ext
except ImportError:  # extension not built
    _ext = None

_FORCE_PY = os.environ.get("NEWSTEIN_PURE_PYTHON", "") not in ("", "0")

BACKEND = "cython" if (_ext is not None and not _FORCE_PY) else "python"


def available_backends() -> list[str]:
    return ["cython", "python"] if _ext is not None else ["python"]


def glm_pass(X, beta, y, family, want_grad=True, backend=None):
    """One sweep over the data.

    Returns ``(obj_sum, grad_sum, mu2_sum, mu4_sum)``; sums are not divided by
    n.  ``grad_sum`` is None when ``want_grad`` is false.
    """
    backend = backend or BACKEND
    grad = np.empty(X.shape[1]) if want_grad else np.empty(0)
    if backend == "cython" and family.code != CODE_CUSTOM:
        if _ext is None:
            raise RuntimeError("compiled kernels are not available")
        obj, mu2, mu4 = _ext.glm_pass(X, beta, y, family.code, grad, want_grad)
    elif backend in ("cython", "python"):
        obj, mu2, mu4 = _kernels_py.glm_pass(X, beta, y, family, grad, want_grad)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return obj, (grad if want_grad else None), mu2, mu4
