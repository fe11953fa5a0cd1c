"""Similarity, putative correspondences, weighted Procrustes and the ICP baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .geometry import RigidTransform, apply_transform, as_cloud
from .tensor import Tensor

DEFAULT_TEMPERATURE = 0.1


class DegenerateConfiguration(ValueError):
    """Correspondences do not pin down a rotation (too few or collinear)."""


@dataclass(frozen=True)
class CorrespondenceSet:
    target_index: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.target_index)

    def with_weight(self, weight) -> CorrespondenceSet:
        return CorrespondenceSet(self.target_index, np.asarray(weight, dtype=np.float64))


def normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit length."""
    n, d = x.shape
    norms = T.sqrt(T.add_scalar(T.sum(T.square(x), axis=1), eps))
    return T.div(x, T.broadcast_cols(norms, d))


def similarity(phi_x: Tensor, phi_y: Tensor, temperature: float = DEFAULT_TEMPERATURE) -> Tensor:
    """Row-softmax of scaled feature dot products, shape ``(N, M)``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = T.matmul(phi_x, T.transpose(phi_y))
    return T.softmax(T.scale(logits, 1.0 / temperature), axis=1)


def correspondences(s) -> CorrespondenceSet:
    """Row-wise argmax of a similarity matrix; ties go to the lowest index."""
    s = s.data if isinstance(s, Tensor) else np.asarray(s, dtype=np.float64)
    idx = np.argmax(s, axis=1).astype(np.int64)
    return CorrespondenceSet(idx, s[np.arange(len(s)), idx])


# ------------------------------------------------------------ SVD helpers

def svd3_jacobi(a, tol: float = 1e-15, max_sweeps: int = 60):
    """3x3 SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``(u, s, vt)`` like ``numpy.linalg.svd`` with singular values
    in descending order. Used as an independent check on LAPACK.
    """
    w = [list(map(float, row)) for row in np.asarray(a, dtype=np.float64)]
    cols = [[w[0][j], w[1][j], w[2][j]] for j in range(3)]
    v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]  # columns of V
    for _ in range(max_sweeps):
        rotated = False
        for p, q in ((0, 1), (0, 2), (1, 2)):
            cp, cq = cols[p], cols[q]
            alpha = cp[0] * cp[0] + cp[1] * cp[1] + cp[2] * cp[2]
            beta = cq[0] * cq[0] + cq[1] * cq[1] + cq[2] * cq[2]
            gamma = cp[0] * cq[0] + cp[1] * cq[1] + cp[2] * cq[2]
            if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                continue
            rotated = True
            zeta = (beta - alpha) / (2.0 * gamma)
            t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = c * t
            cols[p] = [c * x - s * y for x, y in zip(cp, cq)]
            cols[q] = [s * x + c * y for x, y in zip(cp, cq)]
            vp, vq = v[p], v[q]
            v[p] = [c * x - s * y for x, y in zip(vp, vq)]
            v[q] = [s * x + c * y for x, y in zip(vp, vq)]
        if not rotated:
            break
    sig = [math.sqrt(sum(x * x for x in col)) for col in cols]
    order = sorted(range(3), key=lambda j: -sig[j])
    sig = np.array([sig[j] for j in order])
    vmat = np.array([v[j] for j in order]).T
    umat = np.zeros((3, 3))
    for out_j, j in enumerate(order):
        if sig[out_j] > 1e-300:
            umat[:, out_j] = np.array(cols[j]) / sig[out_j]
    # rank-deficient columns: complete U to an orthonormal basis
    if sig[2] <= 1e-12 * max(sig[0], 1e-300):
        umat[:, 2] = np.cross(umat[:, 0], umat[:, 1])
        umat[:, 2] /= np.linalg.norm(umat[:, 2]) or 1.0
    return umat, sig, vmat.T


def rotation_from_covariance(h, svd=np.linalg.svd) -> np.ndarray:
    """Proper rotation maximizing ``trace(R H)``: ``V diag(1, 1, det(V U^T)) U^T``."""
    u, s, vt = svd(h)
    v = vt.T
    d = 1.0 if np.linalg.det(v @ u.T) >= 0 else -1.0
    return (v * np.array([1.0, 1.0, d])) @ u.T


# ------------------------------------------------------------ estimation

def _check_rank(h, scale):
    s = np.linalg.svd(h, compute_uv=False)
    if s[0] <= 1e-300 or s[1] <= 1e-10 * s[0] or scale <= 0:
        raise DegenerateConfiguration("correspondences are collinear or coincident")


def weighted_procrustes(x, y, corr: CorrespondenceSet, svd=np.linalg.svd) -> RigidTransform:
    """Rigid transform minimizing ``sum w_i |R x_i + t - y_M(i)|^2``."""
    x = as_cloud(x)
    y = as_cloud(y)
    w = np.asarray(corr.weight, dtype=np.float64)
    if len(w) != len(x) or len(corr.target_index) != len(x):
        raise ValueError("correspondence set must have one entry per source point")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if np.count_nonzero(w) < 3:
        raise DegenerateConfiguration(f"need at least 3 positively weighted correspondences, got {np.count_nonzero(w)}")
    ym = y[corr.target_index]
    wn = w / w.sum()
    xbar = wn @ x
    ybar = wn @ ym
    h = (x - xbar).T @ ((ym - ybar) * wn[:, None])
    _check_rank(h, np.abs(x - xbar).max())
    r = rotation_from_covariance(h, svd)
    return RigidTransform(r, ybar - r @ xbar)


def weighted_procrustes_tensor(x, y_matched, weight: Tensor):
    """Differentiable weighted Procrustes with respect to the weights.

    ``x`` and ``y_matched`` are constant ``(N, 3)`` arrays (targets already
    gathered through the correspondence map). Returns ``(R, t)`` Tensors.
    """
    x = Tensor(np.asarray(x, dtype=np.float64))
    ym = Tensor(np.asarray(y_matched, dtype=np.float64))
    n = x.shape[0]
    if weight.shape != (n,):
        raise T.ShapeError(f"weight must have shape ({n},), got {weight.shape}")
    total = T.reshape(T.broadcast_cols(T.reshape(T.sum(weight), (1,)), n), (n,))
    wn = T.div(weight, total)
    return _procrustes_from_normalized(x, ym, wn)


def _procrustes_from_normalized(x: Tensor, ym: Tensor, wn: Tensor):
    n = x.shape[0]
    wrow = T.reshape(wn, (1, n))
    xbar = T.matmul(wrow, x)
    ybar = T.matmul(wrow, ym)
    yw = T.mul(ym, T.broadcast_cols(wn, 3))
    h = T.sub(T.matmul(T.transpose(x), yw), T.matmul(T.transpose(xbar), ybar))
    r = T.svd_rotation(h)
    t = T.sub(T.reshape(ybar, (3,)), T.reshape(T.matmul(r, T.transpose(xbar)), (3,)))
    return r, t


def icp(src, tgt, max_iters: int = 50, tol: float = 1e-6, return_info: bool = False):
    """Point-to-point ICP from the identity.

    Stops when the mean nearest-neighbor distance changes by less than
    ``tol`` between iterations, or after ``max_iters``.
    """
    src = as_cloud(src, 3)
    tgt = as_cloud(tgt, 3)
    uniform = np.ones(len(src))
    total = RigidTransform.identity()
    current = src.copy()
    prev_err = None
    it = 0
    for it in range(1, max_iters + 1):
        idx, sq = kernels.nearest_neighbors(current, tgt)
        err = float(np.mean(np.sqrt(sq)))
        if prev_err is not None and abs(prev_err - err) < tol:
            break
        prev_err = err
        step = weighted_procrustes(current, tgt, CorrespondenceSet(idx, uniform))
        total = step.compose(total)
        current = apply_transform(src, total)
    if return_info:
        return total, {"iterations": it, "mean_residual": prev_err}
    return total
