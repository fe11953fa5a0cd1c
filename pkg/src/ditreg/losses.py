"""Training objective: transformation, cycle-consistency and discrimination terms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .geometry import RigidTransform
from .tensor import Tensor

DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 1.0
DEFAULT_R_INLIER = 0.05
PROB_EPS = 1e-7


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossWeights:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


def _const(a) -> Tensor:
    return a if isinstance(a, Tensor) else Tensor(a)


def _frob_sq(a: Tensor) -> Tensor:
    return T.sum(T.square(a))


def transformation_loss(rotation, translation, gt: RigidTransform, literal: bool = False) -> Tensor:
    """``|R^T R* - I|_F^2 + |t - t*|^2``.

    With ``literal`` the translation term becomes ``(t . t* - 1)^2``, the
    scalar-vs-identity reading of the original formula.
    """
    r = _const(rotation)
    t = _const(translation)
    rot_term = _frob_sq(T.sub(T.matmul(T.transpose(r), Tensor(gt.rotation)), Tensor(np.eye(3))))
    if literal:
        dot = T.sum(T.mul(t, Tensor(gt.translation)))
        trans_term = T.square(T.add_scalar(dot, -1.0))
    else:
        trans_term = _frob_sq(T.sub(t, Tensor(gt.translation)))
    return T.add(rot_term, trans_term)


def cycle_loss(r_xy, t_xy, r_yx, t_yx, literal: bool = False) -> Tensor:
    """Consistency of the forward and backward estimates.

    Default: ``|R_xy R_yx - I|^2 + |R_yx t_xy + t_yx|^2`` (zero exactly when
    the backward transform inverts the forward one). ``literal`` uses
    ``|R_xy^T R_yx - I|^2 + |t_xy - t_yx|^2``.
    """
    r_xy, t_xy, r_yx, t_yx = map(_const, (r_xy, t_xy, r_yx, t_yx))
    eye = Tensor(np.eye(3))
    if literal:
        rot = T.sub(T.matmul(T.transpose(r_xy), r_yx), eye)
        trans = T.sub(t_xy, t_yx)
    else:
        rot = T.sub(T.matmul(r_xy, r_yx), eye)
        mapped = T.reshape(T.matmul(r_yx, T.reshape(t_xy, (3, 1))), (3,))
        trans = T.add(mapped, t_yx)
    return T.add(_frob_sq(rot), _frob_sq(trans))


def inlier_labels(x, y, match, gt: RigidTransform, r_inlier: float = DEFAULT_R_INLIER) -> np.ndarray:
    """1.0 where ``|R* x_i + t* - y_M(i)| < r_inlier``, else 0.0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mapped = x @ gt.rotation.T + gt.translation
    dist = np.linalg.norm(mapped - y[np.asarray(match, dtype=np.int64)], axis=1)
    return (dist < r_inlier).astype(np.float64)


def discrimination_loss(s: Tensor, match, labels, eps: float = PROB_EPS) -> Tensor:
    """Binary cross-entropy of the matched similarities against inlier labels."""
    match = np.asarray(match, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.float64)
    n = len(match)
    if n == 0:
        raise ValueError("discrimination loss needs at least one correspondence")
    picked = T.clip(T.take(s, np.arange(n), match), eps, 1.0 - eps)
    pos = T.mul(Tensor(labels), T.log(picked))
    neg = T.mul(Tensor(1.0 - labels), T.log(T.add_scalar(T.scale(picked, -1.0), 1.0)))
    return T.scale(T.sum(T.add(pos, neg)), -1.0 / n)


def total_loss(l_t: Tensor, l_c: Tensor, l_d: Tensor, weights: LossWeights = LossWeights()) -> Tensor:
    """``L_t + alpha * L_c + beta * L_d``; raises on a non-finite part."""
    for name, part in (("transformation", l_t), ("cycle", l_c), ("discrimination", l_d)):
        if not np.all(np.isfinite(part.data)):
            raise NonFiniteLoss(f"{name} loss is not finite: {part.data}")
    return T.add(T.add(l_t, T.scale(l_c, weights.alpha)), T.scale(l_d, weights.beta))
