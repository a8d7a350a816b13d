"""NumPy implementation of the fused GLM pass, used when the extension is absent.

Same contract as the compiled ``glm_pass``; summation order differs (BLAS and
pairwise sums), so the two backends agree to rounding, not bitwise.
"""
import numpy as np


def glm_pass(X, beta, y, family, grad, want_grad):
    # overflow surfaces as inf/nan, which callers turn into NonFiniteError
    with np.errstate(over="ignore", invalid="ignore"):
        z = X @ beta
        d1 = family.derivative(z, 1)
        obj = float(np.sum(family.derivative(z, 0) - y * z))
        mu2 = float(np.sum(family.derivative(z, 2)))
        mu4 = float(np.sum(family.derivative(z, 4)))
        if want_grad:
            grad[:] = X.T @ (d1 - y)
    return obj, mu2, mu4
