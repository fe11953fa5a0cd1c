"""Pure numpy versions of the compiled kernels (same signatures, same results)."""
from __future__ import annotations

import numpy as np


def _sqdist_matrix(a, b):
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    dz = a[:, None, 2] - b[None, :, 2]
    return dx * dx + dy * dy + dz * dz


def knn_indices(pts, k):
    d = _sqdist_matrix(pts, pts)
    np.fill_diagonal(d, np.inf)
    # stable sort: equal distances keep ascending index order
    return np.ascontiguousarray(np.argsort(d, axis=1, kind="stable")[:, :k], dtype=np.int64)


def nearest_neighbors(query, ref):
    d = _sqdist_matrix(query, ref)
    idx = np.argmin(d, axis=1).astype(np.int64)
    return idx, d[np.arange(len(query)), idx]


def _lengths(pts, i, a, b):
    def dist(u, v):
        dx = pts[u, 0] - pts[v, 0]
        dy = pts[u, 1] - pts[v, 1]
        dz = pts[u, 2] - pts[v, 2]
        return np.sqrt(dx * dx + dy * dy + dz * dz)

    return dist(i, a), dist(i, b), dist(a, b)


def triangle_errors(x, y, match, nbr):
    n, k = nbr.shape
    ia, ib = np.triu_indices(k, 1)
    center = np.repeat(np.arange(n), len(ia)).reshape(n, -1)
    a = nbr[:, ia]
    b = nbr[:, ib]
    s0, s1, s2 = _lengths(x, center, a, b)
    t0, t1, t2 = _lengths(y, match[center], match[a], match[b])
    num = (s0 - t0) * (s0 - t0) + (s1 - t1) * (s1 - t1) + (s2 - t2) * (s2 - t2)
    den = (s0 + t0) * (s0 + t0) + (s1 + t1) * (s1 + t1) + (s2 + t2) * (s2 + t2)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0.0, np.sqrt(num / den), 0.0)


def mink_sum(values, k):
    """Sum of the k smallest entries per row, by full sort."""
    part = np.sort(values, axis=1)[:, :k]
    out = np.zeros(len(values))
    for j in range(part.shape[1]):
        out = out + part[:, j]
    return out
