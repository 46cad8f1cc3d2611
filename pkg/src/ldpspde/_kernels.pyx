# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops of the time integrator."""
import numpy as np

from libc.math cimport sqrt, tanh


def linear_recurrence(const double[:, ::1] y0, const double[:, ::1] decay, const double[:, :, ::1] inc):
    """``y[p, k+1] = decay[k] * y[p, k] + inc[p, k]`` for all paths ``p``."""
    cdef Py_ssize_t P = y0.shape[0], n = y0.shape[1], K = decay.shape[0]
    cdef Py_ssize_t p, k, j
    if decay.shape[1] != n or inc.shape[0] != P or inc.shape[1] != K or inc.shape[2] != n:
        raise ValueError("shape mismatch in linear_recurrence")
    out = np.empty((P, K + 1, n))
    cdef double[:, :, ::1] o = out
    with nogil:
        for p in range(P):
            for j in range(n):
                o[p, 0, j] = y0[p, j]
            for k in range(K):
                for j in range(n):
                    o[p, k + 1, j] = decay[k, j] * o[p, k, j] + inc[p, k, j]
    return out


def apply_saturated_jumps(double[:, ::1] y, const double[::1] d, const long long[::1] paths,
                          const double[::1] amps, double eps, double cap):
    """Apply ``y += eps * amp * cap * tanh((1 + |y|) / cap) * d`` jump by jump, in place.

    Jumps are processed in the given order; each one sees the state left by the
    previous jumps of its path.  Every jump moves along ``d`` (a unit vector), so
    only ``|y|²`` and ``y·d`` need updating between jumps.
    """
    cdef Py_ssize_t P = y.shape[0], n = y.shape[1], J = paths.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double c, s
    if d.shape[0] != n or amps.shape[0] != J:
        raise ValueError("shape mismatch in apply_saturated_jumps")
    norm2 = np.zeros(P)
    proj = np.zeros(P)
    shift = np.zeros(P)
    touched = np.zeros(P, dtype=np.uint8)
    cdef double[::1] nrm = norm2, prj = proj, sh = shift
    cdef unsigned char[::1] seen = touched
    with nogil:
        for i in range(J):
            p = paths[i]
            if p < 0 or p >= P:
                with gil:
                    raise IndexError("jump path index out of range")
            if not seen[p]:
                seen[p] = 1
                s = 0.0
                c = 0.0
                for j in range(n):
                    s += y[p, j] * y[p, j]
                    c += y[p, j] * d[j]
                nrm[p] = s
                prj[p] = c
            c = eps * amps[i] * cap * tanh((1.0 + sqrt(nrm[p])) / cap)
            nrm[p] = nrm[p] + 2.0 * c * prj[p] + c * c
            if nrm[p] < 0.0:
                nrm[p] = 0.0
            prj[p] = prj[p] + c
            sh[p] = sh[p] + c
        for p in range(P):
            if seen[p]:
                for j in range(n):
                    y[p, j] = y[p, j] + sh[p] * d[j]
