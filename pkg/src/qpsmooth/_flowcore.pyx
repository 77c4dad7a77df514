# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled flow kernel; mirrors ``_flow_py.integrate_many``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()

cdef double[7] STAGES
cdef double _W1 = -1.17767998417887
cdef double _W2 = 0.235573213359357
cdef double _W3 = 0.784513610477560
cdef double _W0 = 1.0 - 2.0 * (_W1 + _W2 + _W3)
STAGES[:] = [_W3, _W2, _W1, _W0, _W1, _W2, _W3]


cdef inline double _sign(double x) nogil:
    return (x > 0) - (x < 0)


cdef inline double _ipow(double x, int n) nogil:
    cdef double r = 1.0
    while n > 0:
        if n & 1:
            r *= x
        x *= x
        n >>= 1
    return r


cdef inline double _dv(int kind, double l, const double[:] deg, const double[:] coef,
                       double x) nogil:
    cdef double out
    cdef Py_ssize_t i
    cdef int n
    if kind == 0:
        out = 2.0 * x
    elif kind == 1:
        n = <int>(2.0 * l - 1.0)
        if n == 2.0 * l - 1.0 and n % 2 == 1:
            # |x|^n sign(x) = x^n for odd n
            out = 2.0 * l * _ipow(x, n)
        else:
            out = 2.0 * l * pow(fabs(x), 2.0 * l - 1.0) * _sign(x)
    else:
        n = <int>(l - 1.0)
        if n == l - 1.0:
            out = 2.0 * l * x * _ipow(1.0 + x * x, n)
        else:
            out = 2.0 * l * x * pow(1.0 + x * x, l - 1.0)
    if x != 0.0:
        for i in range(deg.shape[0]):
            if deg[i] != 0.0:
                out += coef[i] * deg[i] * pow(fabs(x), deg[i] - 1.0) * _sign(x)
    return out


def dV(int kind, double l, deg, coef, x):
    cdef const double[:] d = np.ascontiguousarray(deg, dtype=float)
    cdef const double[:] c = np.ascontiguousarray(coef, dtype=float)
    xa = np.ascontiguousarray(x, dtype=float)
    cdef double[:] xv = xa.reshape(-1)
    out = np.empty(xv.shape[0])
    cdef double[:] ov = out
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        ov[i] = _dv(kind, l, d, c, xv[i])
    return out.reshape(xa.shape)


def integrate_many(int kind, double l, deg, coef, x0, xi0, h, long nsteps, long record_every):
    cdef const double[:] d = np.ascontiguousarray(deg, dtype=float)
    cdef const double[:] c = np.ascontiguousarray(coef, dtype=float)
    cdef double[:] xv = np.array(x0, dtype=float).reshape(-1)
    cdef double[:] xiv = np.array(xi0, dtype=float).reshape(-1)
    cdef double[:] hv = np.array(np.broadcast_to(np.asarray(h, dtype=float), (xv.shape[0],)), dtype=float)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t nrec = nsteps // record_every + 1
    xs_a = np.empty((n, nrec))
    xis_a = np.empty((n, nrec))
    cdef double[:, :] xs = xs_a
    cdef double[:, :] xis = xis_a
    cdef Py_ssize_t j, r, s
    cdef long step
    cdef double x, xi, hw, f
    with nogil:
        for j in range(n):
            x = xv[j]
            xi = xiv[j]
            xs[j, 0] = x
            xis[j, 0] = xi
            r = 1
            f = _dv(kind, l, d, c, x)
            for step in range(1, nsteps + 1):
                for s in range(7):
                    # the closing half kick of one stage and the opening one of the next share f
                    hw = hv[j] * STAGES[s]
                    xi -= 0.5 * hw * f
                    x += 2.0 * hw * xi
                    f = _dv(kind, l, d, c, x)
                    xi -= 0.5 * hw * f
                if step % record_every == 0:
                    xs[j, r] = x
                    xis[j, r] = xi
                    r += 1
    return xs_a, xis_a
