"""Registration error metrics and success-ratio curves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, matrix_to_euler

CURVE_POINTS = 64
# rotation thresholds in degrees, translation thresholds in cloud units
CURVE_R_RANGE = (1e-3, 1e2)
CURVE_T_RANGE = (1e-5, 1e0)


def _wrap_deg(a):
    return (np.asarray(a) + 180.0) % 360.0 - 180.0


def rotation_error_deg(pred: RigidTransform, gt: RigidTransform) -> np.ndarray:
    """Per-axis absolute Euler-angle differences in degrees."""
    diff = matrix_to_euler(pred.rotation) - matrix_to_euler(gt.rotation)
    return np.abs(_wrap_deg(diff))


def translation_error(pred: RigidTransform, gt: RigidTransform) -> np.ndarray:
    return pred.translation - gt.translation


@dataclass(frozen=True)
class MetricsReport:
    r_rmse: float
    r_mae: float
    t_rmse: float
    t_mae: float
    success_ratio: float

    def row(self, name: str = "") -> str:
        return (f"{name:<16s} R_RMSE={self.r_rmse:.6g} R_MAE={self.r_mae:.6g} "
                f"t_RMSE={self.t_rmse:.6g} t_MAE={self.t_mae:.6g} SR={self.success_ratio:.4f}")


def success_mask(rot_errors, trans_errors, r_thres: float, t_thres: float) -> np.ndarray:
    rot = np.asarray(rot_errors, dtype=np.float64).reshape(-1, 3)
    tr = np.asarray(trans_errors, dtype=np.float64).reshape(-1, 3)
    return (rot.max(axis=1) < r_thres) & (np.linalg.norm(tr, axis=1) < t_thres)


def aggregate_metrics(rot_errors, trans_errors, r_thres: float = 1.0, t_thres: float = 0.01) -> MetricsReport:
    """Aggregate per-pair errors.

    ``rot_errors`` holds per-axis rotation errors (degrees) and
    ``trans_errors`` per-component translation differences, one row per pair.
    """
    rot = np.asarray(rot_errors, dtype=np.float64).reshape(-1, 3)
    tr = np.asarray(trans_errors, dtype=np.float64).reshape(-1, 3)
    if len(rot) == 0 or len(rot) != len(tr):
        raise ValueError("need a non-empty, equally sized set of rotation and translation errors")
    return MetricsReport(
        r_rmse=math.sqrt(_mean(rot**2)),
        r_mae=_mean(np.abs(rot)),
        t_rmse=math.sqrt(_mean(tr**2)),
        t_mae=_mean(np.abs(tr)),
        success_ratio=int(np.count_nonzero(success_mask(rot, tr, r_thres, t_thres))) / len(rot),
    )


def _mean(values) -> float:
    # correctly rounded sum, so the result does not depend on summation order
    flat = np.ravel(values)
    return math.fsum(flat.tolist()) / flat.size


def curve_thresholds(n: int = CURVE_POINTS):
    r = np.logspace(np.log10(CURVE_R_RANGE[0]), np.log10(CURVE_R_RANGE[1]), n)
    t = np.logspace(np.log10(CURVE_T_RANGE[0]), np.log10(CURVE_T_RANGE[1]), n)
    return r, t


def success_curve(rot_errors, trans_errors, n: int = CURVE_POINTS):
    """Success ratio at ``n`` paired log-spaced (rotation, translation) thresholds."""
    r, t = curve_thresholds(n)
    rot = np.asarray(rot_errors, dtype=np.float64).reshape(-1, 3)
    ratios = np.array([np.count_nonzero(success_mask(rot, trans_errors, rt, tt)) / len(rot)
                       for rt, tt in zip(r, t)])
    return r, t, ratios
