# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loops for neighbor search and triangle-descriptor errors.

Every function here has a numpy twin in ``_fallback.py`` with identical
semantics (including tie-breaking) so the two can be cross-checked.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, NAN, sqrt

cnp.import_array()


cdef inline double _sqdist(const double[:, ::1] a, Py_ssize_t i, const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double dx = a[i, 0] - b[j, 0]
    cdef double dy = a[i, 1] - b[j, 1]
    cdef double dz = a[i, 2] - b[j, 2]
    return dx * dx + dy * dy + dz * dz


def knn_indices(const double[:, ::1] pts, Py_ssize_t k):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t i, j, pos, count
    cdef double d
    out = np.empty((n, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    cdef double[::1] best = np.empty(k, dtype=np.float64)
    with nogil:
        for i in range(n):
            count = 0
            for j in range(n):
                if j == i:
                    continue
                d = _sqdist(pts, i, pts, j)
                if count == k and not (d < best[k - 1]):
                    continue
                # strict comparison keeps earlier (lower) indices ahead on ties
                pos = count if count < k else k - 1
                while pos > 0 and d < best[pos - 1]:
                    if pos < k:
                        best[pos] = best[pos - 1]
                        idx[i, pos] = idx[i, pos - 1]
                    pos -= 1
                best[pos] = d
                idx[i, pos] = j
                if count < k:
                    count += 1
    return out


def nearest_neighbors(const double[:, ::1] query, const double[:, ::1] ref):
    cdef Py_ssize_t n = query.shape[0], m = ref.shape[0]
    cdef Py_ssize_t i, j, arg
    cdef double d, best
    idx_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[::1] dist = dist_arr
    with nogil:
        for i in range(n):
            arg = 0
            best = _sqdist(query, i, ref, 0)
            for j in range(1, m):
                d = _sqdist(query, i, ref, j)
                if d < best:
                    best = d
                    arg = j
            idx[i] = arg
            dist[i] = best
    return idx_arr, dist_arr


def triangle_errors(const double[:, ::1] x, const double[:, ::1] y,
                    const cnp.int64_t[::1] match, const cnp.int64_t[:, ::1] nbr):
    cdef Py_ssize_t n = nbr.shape[0], k = nbr.shape[1]
    cdef Py_ssize_t p = k * (k - 1) // 2
    cdef Py_ssize_t i, a, b, g, ia, ib, ti, ta, tb
    cdef double s0, s1, s2, t0, t1, t2, num, den
    out = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] err = out
    with nogil:
        for i in range(n):
            ti = match[i]
            g = 0
            for a in range(k):
                ia = nbr[i, a]
                ta = match[ia]
                for b in range(a + 1, k):
                    ib = nbr[i, b]
                    tb = match[ib]
                    s0 = sqrt(_sqdist(x, i, x, ia))
                    s1 = sqrt(_sqdist(x, i, x, ib))
                    s2 = sqrt(_sqdist(x, ia, x, ib))
                    t0 = sqrt(_sqdist(y, ti, y, ta))
                    t1 = sqrt(_sqdist(y, ti, y, tb))
                    t2 = sqrt(_sqdist(y, ta, y, tb))
                    num = (s0 - t0) * (s0 - t0) + (s1 - t1) * (s1 - t1) + (s2 - t2) * (s2 - t2)
                    den = (s0 + t0) * (s0 + t0) + (s1 + t1) * (s1 + t1) + (s2 + t2) * (s2 + t2)
                    err[i, g] = sqrt(num / den) if den > 0.0 else 0.0
                    g += 1
    return out


def mink_sum(const double[:, ::1] values, Py_ssize_t k):
    """Sum of the k smallest entries per row, summed in ascending order.

    Keeps a sorted buffer of the k smallest values seen so far and merges each
    new value with a branch-free min/max pass. NaN entries sort last, as in
    np.sort, so a row with fewer than k finite-or-inf values sums to NaN.
    """
    cdef Py_ssize_t n = values.shape[0], p = values.shape[1]
    cdef Py_ssize_t i, j, pos, m, kk = min(k, p)
    cdef double v, a, b, acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] best = np.empty(max(kk, 1), dtype=np.float64)
    with nogil:
        for i in range(n):
            for j in range(kk):
                best[j] = INFINITY
            m = 0
            for j in range(p):
                v = values[i, j]
                if v != v:
                    continue
                m += 1
                for pos in range(kk - 1, 0, -1):
                    a = best[pos - 1]
                    b = best[pos]
                    a = v if a < v else a
                    best[pos] = a if a < b else b
                best[0] = v if v < best[0] else best[0]
            acc = 0.0
            for j in range(kk):
                acc = acc + best[j]
            res[i] = acc if m >= kk else NAN
    return out
