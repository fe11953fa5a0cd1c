"""Kernel dispatch: compiled Cython loops when built, numpy otherwise.

Set ``DITREG_PURE_PYTHON=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("DITREG_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python mode requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "numpy"


def _pts(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _idx(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def knn_indices(pts, k: int) -> np.ndarray:
    return _impl.knn_indices(_pts(pts), int(k))


def nearest_neighbors(query, ref):
    return _impl.nearest_neighbors(_pts(query), _pts(ref))


def triangle_errors(x, y, match, nbr) -> np.ndarray:
    return _impl.triangle_errors(_pts(x), _pts(y), _idx(match), _idx(nbr))


def mink_sum(values, k: int) -> np.ndarray:
    return _impl.mink_sum(_pts(values), int(k))
