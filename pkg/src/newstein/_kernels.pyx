# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused single-pass GLM kernel.

One sweep over the rows of X yields the objective sum, the unnormalised
gradient, and the sums of the second and fourth cumulant derivatives.  Rows
are visited in order and each row dot product uses four fixed accumulators,
so results are reproducible run to run.
"""
from libc.math cimport exp, log1p, fmin

DEF LOGISTIC = 0
DEF LEAST_SQUARES = 1
DEF POISSON = 2


cdef inline void _derivs(int fam, double z, double* d0, double* d1,
                         double* d2, double* d4) noexcept nogil:
    cdef double e, s, t, st
    if fam == LOGISTIC:
        if z >= 0:
            e = exp(-z)
            s = 1.0 / (1.0 + e)
            t = e / (1.0 + e)
            d0[0] = z + log1p(e)
        else:
            e = exp(z)
            s = e / (1.0 + e)
            t = 1.0 / (1.0 + e)
            d0[0] = log1p(e)
        st = s * t
        d1[0] = s
        d2[0] = st
        d4[0] = st * (1.0 - 6.0 * st)
    elif fam == LEAST_SQUARES:
        d0[0] = z * z
        d1[0] = 2.0 * z
        d2[0] = 2.0
        d4[0] = 0.0
    else:
        e = exp(fmin(z, 700.0))
        d0[0] = e
        d1[0] = e
        d2[0] = e
        d4[0] = e


cdef inline double _rowdot(const double* x, const double* b, Py_ssize_t p) noexcept nogil:
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t stop = p - (p % 4)
    while j < stop:
        a0 += x[j] * b[j]
        a1 += x[j + 1] * b[j + 1]
        a2 += x[j + 2] * b[j + 2]
        a3 += x[j + 3] * b[j + 3]
        j += 4
    while j < p:
        a0 += x[j] * b[j]
        j += 1
    return (a0 + a1) + (a2 + a3)


def glm_pass(const double[:, ::1] X, const double[::1] beta,
             const double[::1] y, int fam, double[::1] grad, bint want_grad):
    """Return (sum objective, sum phi'', sum phi'''') and fill ``grad`` in place.

    ``grad`` receives sum_i (phi'(z_i) - y_i) x_i when ``want_grad`` is set.
    """
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double z, w, d0 = 0.0, d1 = 0.0, d2 = 0.0, d4 = 0.0
    cdef double obj = 0.0, mu2 = 0.0, mu4 = 0.0
    cdef const double* xi
    cdef const double* b = &beta[0]
    cdef double* g = &grad[0] if want_grad else NULL
    if want_grad:
        for j in range(p):
            g[j] = 0.0
    with nogil:
        for i in range(n):
            xi = &X[i, 0]
            z = _rowdot(xi, b, p)
            _derivs(fam, z, &d0, &d1, &d2, &d4)
            obj += d0 - y[i] * z
            mu2 += d2
            mu4 += d4
            if want_grad:
                w = d1 - y[i]
                for j in range(p):
                    g[j] += w * xi[j]
    return obj, mu2, mu4
