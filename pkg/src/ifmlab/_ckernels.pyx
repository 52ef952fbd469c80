# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _matvec(const double complex[:, ::1] a, const double complex[::1] x,
                         double complex[::1] y, Py_ssize_t off_a, Py_ssize_t off_x,
                         Py_ssize_t off_y, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double complex acc
    for i in range(size):
        acc = 0
        for j in range(size):
            acc = acc + a[off_a + i, off_a + j] * x[off_x + j]
        y[off_y + i] = acc


def effective_recursion(const double complex[:, :, ::1] V, const double complex[::1] psi0,
                        const double complex[:, ::1] block):
    cdef Py_ssize_t T = V.shape[0], n = V.shape[1], m = n // 2
    cdef Py_ssize_t t, i, j
    cdef double complex acc
    psi_prime_arr = np.empty((T + 1, n), dtype=np.complex128)
    psi_arr = np.empty((T + 1, n), dtype=np.complex128)
    cdef double complex[:, ::1] psi_prime = psi_prime_arr
    cdef double complex[:, ::1] psi = psi_arr
    with nogil:
        for i in range(n):
            psi_prime[0, i] = psi0[i]
            psi[0, i] = psi0[i]
        for t in range(T):
            for i in range(n):
                acc = 0
                for j in range(n):
                    acc = acc + V[t, i, j] * psi[t, j]
                psi_prime[t + 1, i] = acc
            for i in range(m):
                psi[t + 1, i] = psi_prime[t + 1, i]
            for i in range(m):
                acc = 0
                for j in range(m):
                    acc = acc + block[i, j] * psi_prime[t + 1, m + j]
                psi[t + 1, m + i] = acc
    return psi_prime_arr, psi_arr


def channel_recursion(const double complex[:, :, ::1] V, const double complex[:, ::1] rho0,
                      const double complex[:, :, ::1] kraus):
    cdef Py_ssize_t T = V.shape[0], n = V.shape[1], K = kraus.shape[0]
    cdef Py_ssize_t t, k, a, b, c
    cdef double complex acc
    out_arr = np.empty((T + 1, n, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef double complex[:, ::1] tmp = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] r = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] kr = np.empty((n, n), dtype=np.complex128)
    with nogil:
        for a in range(n):
            for b in range(n):
                out[0, a, b] = rho0[a, b]
        for t in range(T):
            # r = V rho V^H
            for a in range(n):
                for b in range(n):
                    acc = 0
                    for c in range(n):
                        acc = acc + V[t, a, c] * out[t, c, b]
                    tmp[a, b] = acc
            for a in range(n):
                for b in range(n):
                    acc = 0
                    for c in range(n):
                        acc = acc + tmp[a, c] * V[t, b, c].conjugate()
                    r[a, b] = acc
            for a in range(n):
                for b in range(n):
                    out[t + 1, a, b] = 0
            for k in range(K):
                for a in range(n):
                    for b in range(n):
                        acc = 0
                        for c in range(n):
                            acc = acc + kraus[k, a, c] * r[c, b]
                        kr[a, b] = acc
                for a in range(n):
                    for b in range(n):
                        acc = 0
                        for c in range(n):
                            acc = acc + kr[a, c] * kraus[k, b, c].conjugate()
                        out[t + 1, a, b] = out[t + 1, a, b] + acc
    return out_arr


def controlled_sequence(const double complex[:, :, ::1] gates, const unsigned char[::1] target_only,
                        const double complex[:, ::1] state0):
    cdef Py_ssize_t G = gates.shape[0], d = state0.shape[1]
    cdef Py_ssize_t g, c, i, j
    cdef double complex acc
    hist_arr = np.empty((G + 1, 2, d), dtype=np.complex128)
    cdef double complex[:, :, ::1] hist = hist_arr
    with nogil:
        for c in range(2):
            for i in range(d):
                hist[0, c, i] = state0[c, i]
        for g in range(G):
            for c in range(2):
                if c == 0 and target_only[g]:
                    for i in range(d):
                        hist[g + 1, c, i] = hist[g, c, i]
                    continue
                for i in range(d):
                    acc = 0
                    for j in range(d):
                        acc = acc + gates[g, i, j] * hist[g, c, j]
                    hist[g + 1, c, i] = acc
    return hist_arr
