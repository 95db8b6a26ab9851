# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled SU(2) chain products.

Each step applies exp(-i v.sigma/2) where v = (vx, vy, vz) is a rotation
vector in radians. Steps are applied in array order (element 0 first).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()


cdef inline void _step(double x, double y, double z, double* c, double* s) noexcept nogil:
    cdef double n = sqrt(x * x + y * y + z * z)
    c[0] = cos(0.5 * n)
    if n > 1e-300:
        s[0] = sin(0.5 * n) / n
    else:
        s[0] = 0.5


def su2_chain(double[::1] vx, double[::1] vy, double[::1] vz, U0=None):
    """Ordered product E_N ... E_1 @ U0 (U0 defaults to the identity)."""
    cdef Py_ssize_t i, n = vx.shape[0]
    cdef double complex a, b, c, d, e00, e01, e10, e11, na, nb, nc, nd
    cdef double co, si
    if U0 is None:
        a, b, c, d = 1.0, 0.0, 0.0, 1.0
    else:
        a, b, c, d = U0[0, 0], U0[0, 1], U0[1, 0], U0[1, 1]
    with nogil:
        for i in range(n):
            _step(vx[i], vy[i], vz[i], &co, &si)
            e00 = co - 1j * si * vz[i]
            e11 = co + 1j * si * vz[i]
            e01 = -1j * si * vx[i] - si * vy[i]
            e10 = -1j * si * vx[i] + si * vy[i]
            na = e00 * a + e01 * c
            nb = e00 * b + e01 * d
            nc = e10 * a + e11 * c
            nd = e10 * b + e11 * d
            a, b, c, d = na, nb, nc, nd
    return np.array([[a, b], [c, d]], dtype=complex)


def su2_track_p2(double[::1] vx, double[::1] vy, double[::1] vz, psi0, Py_ssize_t stride=1):
    """Propagate a spinor; return (psi, sum of P2(<sigma_z>), samples).

    P2(a_z) = (3 a_z**2 - 1)/2 is sampled after every ``stride`` steps.
    """
    cdef Py_ssize_t i, n = vx.shape[0]
    cdef double complex p, q, e00, e01, e10, e11, np_, nq
    cdef double co, si, az, acc = 0.0
    cdef Py_ssize_t count = 0
    p = psi0[0]
    q = psi0[1]
    with nogil:
        for i in range(n):
            _step(vx[i], vy[i], vz[i], &co, &si)
            e00 = co - 1j * si * vz[i]
            e11 = co + 1j * si * vz[i]
            e01 = -1j * si * vx[i] - si * vy[i]
            e10 = -1j * si * vx[i] + si * vy[i]
            np_ = e00 * p + e01 * q
            nq = e10 * p + e11 * q
            p, q = np_, nq
            if (i + 1) % stride == 0:
                az = (p.real * p.real + p.imag * p.imag) - (q.real * q.real + q.imag * q.imag)
                acc += 1.5 * az * az - 0.5
                count += 1
    return np.array([p, q], dtype=complex), acc, count
