# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for Nadaraya-Watson benefit smoothing and pair distances.

Must stay numerically equivalent to ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, erfc

cnp.import_array()

cdef double M_SQRT1_2 = 0.70710678118654752440


cdef inline double _psi(double eta, int link) noexcept nogil:
    if link == 0:
        return 1.0 / (1.0 + exp(-eta))
    if link == 1:
        return 0.5 * erfc(-eta * M_SQRT1_2)
    return eta


cdef inline double _benefit(double e0, double e1, int benefit, int link,
                            double delta, double scale) noexcept nogil:
    cdef double p0, p1
    if benefit == 0:
        return _psi(e0, link)
    if benefit == 3:
        return 0.5 * erfc(-((e1 - e0 - delta) / scale) * M_SQRT1_2)
    p0 = _psi(e0, link)
    p1 = _psi(e1, link)
    if benefit == 1:
        return 1.0 - p0 * (1.0 - p1)
    return p1 * (1.0 - p0)


def nw_benefit(const double[::1] z_eval, const double[::1] z_obs,
               const double[::1] bandwidths,
               const double[:, ::1] a, const double[:, ::1] b,
               int benefit, int link,
               const double[::1] nodes, const double[::1] weights,
               double delta, double scale):
    cdef Py_ssize_t m = z_eval.shape[0]
    cdef Py_ssize_t n = z_obs.shape[0]
    cdef Py_ssize_t L = bandwidths.shape[0]
    cdef Py_ssize_t K = nodes.shape[0]
    cdef Py_ssize_t two = a.shape[1]
    cdef Py_ssize_t j, i, k, l
    cdef double e0, e1, u, v, d, w, a0, a1, x0, x1, p0, p1
    cdef bint fast = link == 0 and (benefit == 1 or benefit == 2)
    num_arr = np.zeros((m, L), dtype=np.float64)
    den_arr = np.zeros((m, L), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double[:, ::1] den = den_arr
    cdef double[::1] inv = np.empty(L, dtype=np.float64)
    cdef double[::1] shift = np.exp(-np.asarray(nodes))
    for l in range(L):
        inv[l] = 1.0 / bandwidths[l]
    with nogil:
        for j in range(m):
            a0 = a[j, 0]
            a1 = a[j, 1] if two > 1 else 0.0
            for i in range(n):
                e0 = a0 + b[i, 0]
                e1 = (a1 + b[i, 1]) if two > 1 else 0.0
                v = 0.0
                if fast:
                    # logistic(e + u) = 1 / (1 + exp(-e) exp(-u))
                    x0 = exp(-e0)
                    x1 = exp(-e1)
                    for k in range(K):
                        p0 = 1.0 / (1.0 + x0 * shift[k])
                        p1 = 1.0 / (1.0 + x1 * shift[k])
                        if benefit == 1:
                            v += weights[k] * (1.0 - p0 * (1.0 - p1))
                        else:
                            v += weights[k] * (p1 * (1.0 - p0))
                else:
                    for k in range(K):
                        u = nodes[k]
                        v += weights[k] * _benefit(e0 + u, e1 + u, benefit, link, delta, scale)
                d = z_obs[i] - z_eval[j]
                for l in range(L):
                    w = d * inv[l]
                    w = exp(-0.5 * w * w)
                    num[j, l] += w * v
                    den[j, l] += w
    return num_arr, den_arr


def nw_matrix(const double[::1] z_eval, const double[::1] z_obs,
              const double[::1] bandwidths, const double[:, ::1] values):
    cdef Py_ssize_t m = z_eval.shape[0]
    cdef Py_ssize_t n = z_obs.shape[0]
    cdef Py_ssize_t L = bandwidths.shape[0]
    cdef Py_ssize_t j, i, l
    cdef double d, w
    num_arr = np.zeros((m, L), dtype=np.float64)
    den_arr = np.zeros((m, L), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double[:, ::1] den = den_arr
    cdef double[::1] inv = np.empty(L, dtype=np.float64)
    for l in range(L):
        inv[l] = 1.0 / bandwidths[l]
    with nogil:
        for j in range(m):
            for i in range(n):
                d = (z_obs[i] - z_eval[j])
                for l in range(L):
                    w = d * inv[l]
                    w = exp(-0.5 * w * w)
                    num[j, l] += w * values[j, i]
                    den[j, l] += w
    return num_arr, den_arr


def pair_sq_distances(const double[:, ::1] x0, const double[:, ::1] x1):
    cdef Py_ssize_t n0 = x0.shape[0]
    cdef Py_ssize_t n1 = x1.shape[0]
    cdef Py_ssize_t p = x0.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double s, d
    out_arr = np.empty(n0 * n1, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n0):
            for j in range(n1):
                s = 0.0
                for c in range(p):
                    d = x0[i, c] - x1[j, c]
                    s += d * d
                out[i * n1 + j] = s
    return out_arr
