# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_kernels_py`` for semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def matching_outcome_probs(const double complex[::1] amps, const long long[::1] first,
                           const long long[::1] second, Py_ssize_t n_valid):
    cdef Py_ssize_t npairs = first.shape[0]
    cdef Py_ssize_t dim = amps.shape[0]
    cdef Py_ssize_t k, l
    cdef double complex a, b, s, d
    out = np.empty(2 * npairs + (dim - n_valid), dtype=np.float64)
    cdef double[::1] o = out
    for k in range(npairs):
        a = amps[first[k]]
        b = amps[second[k]]
        s = a + b
        d = a - b
        o[2 * k] = (s.real * s.real + s.imag * s.imag) * 0.5
        o[2 * k + 1] = (d.real * d.real + d.imag * d.imag) * 0.5
    for l in range(n_valid, dim):
        a = amps[l]
        o[2 * npairs + l - n_valid] = a.real * a.real + a.imag * a.imag
    return out


def counted_mask(const long long[::1] i, const long long[::1] j, Py_ssize_t n):
    cdef Py_ssize_t m = i.shape[0]
    cdef Py_ssize_t l
    cdef long long a, b
    used_arr = np.zeros(n, dtype=np.uint8)
    out = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] used = used_arr
    cdef unsigned char[::1] o = out
    for l in range(m):
        a = i[l]
        b = j[l]
        if used[a] == 0 and used[b] == 0:
            used[a] = 1
            used[b] = 1
            o[l] = 1
    return out


def ring_key_shares(left, right, long long M):
    cdef const long long[:, ::1] L = np.ascontiguousarray(np.atleast_2d(left), dtype=np.int64)
    cdef const long long[:, ::1] R = np.ascontiguousarray(np.atleast_2d(right), dtype=np.int64)
    cdef Py_ssize_t T = L.shape[0]
    cdef Py_ssize_t N = L.shape[1]
    cdef Py_ssize_t t, k, prev
    out = np.empty((T, N), dtype=np.int64)
    cdef long long[:, ::1] z = out
    for t in range(T):
        for k in range(N):
            prev = k - 1 if k > 0 else N - 1
            z[t, k] = (L[t, k] + (M - 1) * R[t, prev]) % M
    if np.ndim(left) == 1:
        return out[0]
    return out
