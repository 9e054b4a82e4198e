# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: packed polynomial systems and a Dormand-Prince 5(4) integrator.

A packed system stores, for each output component c, the terms
offsets[c]:offsets[c+1] of an exponent matrix and a coefficient vector.
The integrator is a line-by-line port of the pure-Python fallback so the
two backends take the same steps.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()

ctypedef cnp.int64_t idx_t

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline double _ipow(double x, idx_t k) nogil:
    cdef double r = 1.0
    cdef idx_t n = k if k > 0 else -k
    cdef double b = x
    while n:
        if n & 1:
            r *= b
        n >>= 1
        if n:
            b *= b
    if k < 0:
        return 1.0 / r
    return r


cdef void _eval(const idx_t[:, ::1] exps, const double[::1] coeffs, const idx_t[::1] offsets,
                const double[::1] z, double[::1] out) noexcept nogil:
    cdef Py_ssize_t c, t, v
    cdef Py_ssize_t ncomp = offsets.shape[0] - 1
    cdef Py_ssize_t nv = exps.shape[1]
    cdef double acc, term
    cdef idx_t k
    for c in range(ncomp):
        acc = 0.0
        for t in range(offsets[c], offsets[c + 1]):
            term = coeffs[t]
            for v in range(nv):
                k = exps[t, v]
                if k != 0:
                    term *= _ipow(z[v], k)
            acc += term
        out[c] = acc


def poly_eval(idx_t[:, ::1] exps, double[::1] coeffs, idx_t[::1] offsets, double[::1] z, double[::1] out):
    """Evaluate a packed polynomial system at ``z`` into ``out``."""
    with nogil:
        _eval(exps, coeffs, offsets, z, out)


def dopri_poly(idx_t[:, ::1] exps, double[::1] coeffs, idx_t[::1] offsets, z0,
               double span, double rtol, double atol, double box, Py_ssize_t nbox,
               Py_ssize_t max_steps):
    """Integrate dz/ds = F(z) for ``span`` (may be negative).

    Returns (z, steps, max_local_error, status, s_reached); status is 0 on
    success, 1 on step-size underflow, 2 when |z_i| > box for i < nbox,
    3 when max_steps is exceeded.
    """
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] y_arr = np.array(z0, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double[::1] ynew = np.empty(n)
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] k1 = np.empty(n)
    cdef double[::1] k2 = np.empty(n)
    cdef double[::1] k3 = np.empty(n)
    cdef double[::1] k4 = np.empty(n)
    cdef double[::1] k5 = np.empty(n)
    cdef double[::1] k6 = np.empty(n)
    cdef double[::1] k7 = np.empty(n)
    cdef double s = 0.0
    cdef double sgn = 1.0 if span >= 0 else -1.0
    cdef double total = fabs(span)
    cdef double h = total / 100.0
    cdef double hmin = 1e-12 * (total if total > 1.0 else 1.0)
    cdef double err, sc, e, fac, a, b, maxerr = 0.0
    cdef Py_ssize_t i, steps = 0
    cdef int status = 0
    cdef bint last
    if total == 0.0:
        return y_arr, 0, 0.0, 0, 0.0
    if h > 0.05:
        h = 0.05
    with nogil:
        _eval(exps, coeffs, offsets, y, k1)
        while s < total:
            if steps >= max_steps:
                status = 3
                break
            last = s + h >= total
            if last:
                h = total - s
            for i in range(n):
                tmp[i] = y[i] + sgn * h * (A21 * k1[i])
            _eval(exps, coeffs, offsets, tmp, k2)
            for i in range(n):
                tmp[i] = y[i] + sgn * h * (A31 * k1[i] + A32 * k2[i])
            _eval(exps, coeffs, offsets, tmp, k3)
            for i in range(n):
                tmp[i] = y[i] + sgn * h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            _eval(exps, coeffs, offsets, tmp, k4)
            for i in range(n):
                tmp[i] = y[i] + sgn * h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            _eval(exps, coeffs, offsets, tmp, k5)
            for i in range(n):
                tmp[i] = y[i] + sgn * h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            _eval(exps, coeffs, offsets, tmp, k6)
            for i in range(n):
                ynew[i] = y[i] + sgn * h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
            _eval(exps, coeffs, offsets, ynew, k7)
            err = 0.0
            for i in range(n):
                e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                a = fabs(y[i])
                b = fabs(ynew[i])
                sc = atol + rtol * (a if a > b else b)
                e = fabs(e) / sc
                if e > err:
                    err = e
            if err != err:
                err = 1e10
            if err <= 1.0:
                s = s + h
                steps += 1
                if err > maxerr:
                    maxerr = err
                for i in range(n):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                for i in range(nbox):
                    if fabs(y[i]) > box or y[i] != y[i]:
                        status = 2
                if status:
                    break
                if last:
                    break
                fac = 5.0 if err == 0.0 else 0.9 * pow(err, -0.2)
                if fac > 5.0:
                    fac = 5.0
                if fac < 0.2:
                    fac = 0.2
                h = h * fac
            else:
                fac = 0.9 * pow(err, -0.2)
                if fac < 0.2:
                    fac = 0.2
                if fac > 1.0:
                    fac = 1.0
                h = h * fac
            if h < hmin:
                status = 1
                break
    return y_arr, steps, maxerr * rtol, status, sgn * s
