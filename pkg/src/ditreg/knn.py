"""Exact k-nearest-neighbor queries in 3D."""
from __future__ import annotations

import numpy as np

from . import kernels
from .geometry import as_cloud


def knn_indices(cloud, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points for every point.

    Returns an ``(N, k)`` int64 array. The query point itself is excluded,
    rows are sorted by ascending distance, and equal distances are broken
    by the lower index.
    """
    pts = as_cloud(cloud)
    n = len(pts)
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < N, got k={k}, N={n}")
    return kernels.knn_indices(pts, k)


def default_k(n: int, k: int = 20) -> int:
    """Neighborhood size that stays valid on tiny clouds."""
    return max(1, min(k, n // 4))
