"""Point clouds, rigid transforms, procedural shapes and pair generation.

Point clouds are plain ``(N, 3)`` float64 arrays. Rotations use the
intrinsic XYZ Euler convention, ``R = Rx(a) @ Ry(b) @ Rz(c)``, both when
sampling and when decomposing errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SHAPES = ("sphere", "cube", "cylinder", "torus", "plane-cross")
PAIR_MODES = ("clean", "partial_low", "partial_high")

# (variance, clip bound) per partial mode
NOISE = {
    "partial_low": (0.001, 0.001),
    "partial_high": (0.01, 0.05),
}
REMOVE_RATIO = 200 / 1024


def as_cloud(points, min_points: int = 0) -> np.ndarray:
    """Validate and convert to a contiguous ``(N, 3)`` float64 array."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"point cloud must have shape (N, 3), got {arr.shape}")
    if arr.shape[0] < min_points:
        raise ValueError(f"point cloud needs at least {min_points} points, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point cloud contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"homogeneous matrix must be 4x4, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        return bool(
            np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0)
            and abs(np.linalg.det(r) - 1.0) <= tol
        )


def apply_transform(cloud, T: RigidTransform) -> np.ndarray:
    pts = as_cloud(cloud)
    if np.array_equal(T.rotation, np.eye(3)) and not T.translation.any():
        return pts.copy()
    return pts @ T.rotation.T + T.translation


def invert(T: RigidTransform) -> RigidTransform:
    rt = T.rotation.T
    return RigidTransform(rt, -(rt @ T.translation))


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(angles_deg) -> np.ndarray:
    """Intrinsic XYZ Euler angles (degrees) to a rotation matrix."""
    a, b, c = np.radians(np.asarray(angles_deg, dtype=np.float64))
    return _rx(a) @ _ry(b) @ _rz(c)


def matrix_to_euler(rotation) -> np.ndarray:
    """Decompose a rotation into intrinsic XYZ Euler angles in degrees.

    At gimbal lock (pitch within 1e-6 degrees of +-90) the yaw is pinned
    to zero and the whole residual rotation is assigned to roll.
    """
    r = np.asarray(rotation, dtype=np.float64)
    sb = min(1.0, max(-1.0, r[0, 2]))
    pitch = math.asin(sb)
    if abs(abs(math.degrees(pitch)) - 90.0) < 1e-6:
        roll = math.atan2(r[2, 1], r[1, 1])
        yaw = 0.0
    else:
        roll = math.atan2(-r[1, 2], r[2, 2])
        yaw = math.atan2(-r[0, 1], r[0, 0])
    return np.degrees([roll, pitch, yaw])


def random_transform(rot_max_deg: float, trans_max: float, rng: np.random.Generator) -> RigidTransform:
    if rot_max_deg < 0:
        raise ValueError("rot_max_deg must be non-negative")
    angles = rng.uniform(0.0, rot_max_deg, size=3)
    t = rng.uniform(-trans_max, trans_max, size=3)
    return RigidTransform(euler_to_matrix(angles), t)


def _unit_rows(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_sphere(n, rng):
    return _unit_rows(rng.normal(size=(n, 3)))


def _sample_cube(n, rng):
    face = rng.integers(0, 6, size=n)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = face % 3
    pts[np.arange(n), axis] = np.where(face < 3, 1.0, -1.0)
    return pts


def _sample_cylinder(n, rng, radius=1.0, half_height=1.0):
    side_area = 2 * math.pi * radius * 2 * half_height
    cap_area = math.pi * radius**2
    part = rng.choice(3, size=n, p=np.array([side_area, cap_area, cap_area]) / (side_area + 2 * cap_area))
    theta = rng.uniform(0, 2 * math.pi, size=n)
    pts = np.empty((n, 3))
    side = part == 0
    pts[side, 0] = radius * np.cos(theta[side])
    pts[side, 1] = radius * np.sin(theta[side])
    pts[side, 2] = rng.uniform(-half_height, half_height, size=side.sum())
    cap = ~side
    rad = radius * np.sqrt(rng.uniform(0, 1, size=cap.sum()))
    pts[cap, 0] = rad * np.cos(theta[cap])
    pts[cap, 1] = rad * np.sin(theta[cap])
    pts[cap, 2] = np.where(part[cap] == 1, half_height, -half_height)
    return pts


def _sample_torus(n, rng, major=1.0, minor=0.4):
    # rejection on the tube angle gives uniform surface density
    out = np.empty((0, 2))
    while len(out) < n:
        u = rng.uniform(0, 2 * math.pi, size=2 * n)
        v = rng.uniform(0, 2 * math.pi, size=2 * n)
        keep = rng.uniform(0, 1, size=2 * n) < (major + minor * np.cos(v)) / (major + minor)
        out = np.vstack([out, np.stack([u[keep], v[keep]], axis=1)])
    u, v = out[:n, 0], out[:n, 1]
    ring = major + minor * np.cos(v)
    return np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)


def _sample_plane_cross(n, rng):
    # three mutually orthogonal unit squares through the origin
    plane = rng.integers(0, 3, size=n)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    pts[np.arange(n), plane] = 0.0
    return pts


_SAMPLERS = {
    "sphere": _sample_sphere,
    "cube": _sample_cube,
    "cylinder": _sample_cylinder,
    "torus": _sample_torus,
    "plane-cross": _sample_plane_cross,
}


def sample_shape(name: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``n`` points on a procedural surface, rescaled to max norm 1."""
    try:
        sampler = _SAMPLERS[name]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; expected one of {', '.join(SHAPES)}") from None
    if n < 3:
        raise ValueError("need at least 3 points")
    pts = sampler(n, rng)
    return pts / np.max(np.linalg.norm(pts, axis=1))


@dataclass(frozen=True)
class PairSample:
    src: np.ndarray
    tgt: np.ndarray
    ground_truth: RigidTransform
    # per-source index into tgt, -1 where the partner was removed
    gt_correspondence: np.ndarray | None = None
    # tgt before noise injection (same row order as tgt)
    tgt_clean: np.ndarray | None = field(default=None, repr=False)


def removal_count(n: int) -> int:
    return math.ceil(REMOVE_RATIO * n)


def _crop(points, n_remove, rng):
    direction = _unit_rows(rng.normal(size=(1, 3)))[0]
    proj = points @ direction
    order = np.argsort(proj, kind="stable")
    keep = np.sort(order[: len(points) - n_remove])
    return keep


def make_pair(cloud, mode: str, rng: np.random.Generator, rot_max_deg: float = 45.0,
              trans_max: float = 0.5) -> PairSample:
    """Build a (src, tgt) registration pair from one cloud.

    Partial modes crop each side independently along a random direction
    (dropping the points with largest projection) and add clipped
    Gaussian noise to both clouds.
    """
    if mode not in PAIR_MODES:
        raise ValueError(f"unknown pair mode {mode!r}")
    src = as_cloud(cloud, min_points=3)
    T = random_transform(rot_max_deg, trans_max, rng)
    n = len(src)
    if mode == "clean":
        tgt = apply_transform(src, T)
        return PairSample(src, tgt, T, np.arange(n), tgt.copy())

    n_remove = removal_count(n)
    if n < 3 * n_remove:
        raise ValueError(f"cloud too small for partial mode: {n} points, removing {n_remove}")
    keep_src = _crop(src, n_remove, rng)
    keep_tgt = _crop(src, n_remove, rng)
    src_part = src[keep_src]
    tgt_clean = apply_transform(src[keep_tgt], T)

    where_in_tgt = np.full(n, -1, dtype=np.int64)
    where_in_tgt[keep_tgt] = np.arange(len(keep_tgt))
    corr = where_in_tgt[keep_src]

    variance, clip = NOISE[mode]
    sigma = math.sqrt(variance)
    src_noisy = src_part + np.clip(rng.normal(0.0, sigma, size=src_part.shape), -clip, clip)
    tgt_noisy = tgt_clean + np.clip(rng.normal(0.0, sigma, size=tgt_clean.shape), -clip, clip)
    return PairSample(src_noisy, tgt_noisy, T, corr, tgt_clean)


# ---------------------------------------------------------------- file I/O

def load_xyz(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
        rows.append([float(p) for p in parts])
    return as_cloud(np.array(rows, dtype=np.float64).reshape(-1, 3))


def save_xyz(path, points) -> None:
    pts = as_cloud(points)
    lines = [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in pts]
    Path(path).write_text("\n".join(lines) + "\n")


def format_matrix(T: RigidTransform) -> str:
    return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in T.matrix()) + "\n"


def parse_matrix(text: str) -> RigidTransform:
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    m = np.array(rows, dtype=np.float64)
    return RigidTransform.from_matrix(m)


def save_pair(directory, pair: PairSample) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_xyz(d / "src.xyz", pair.src)
    save_xyz(d / "tgt.xyz", pair.tgt)
    (d / "gt.txt").write_text(format_matrix(pair.ground_truth))
    # noise-free target and correspondences, used for training labels
    if pair.tgt_clean is not None and not np.array_equal(pair.tgt_clean, pair.tgt):
        save_xyz(d / "tgt_clean.xyz", pair.tgt_clean)
    if pair.gt_correspondence is not None:
        (d / "corr.txt").write_text("".join(f"{int(i)}\n" for i in pair.gt_correspondence))


def load_pair(directory) -> PairSample:
    d = Path(directory)
    tgt = load_xyz(d / "tgt.xyz")
    clean = d / "tgt_clean.xyz"
    corr = d / "corr.txt"
    return PairSample(
        load_xyz(d / "src.xyz"),
        tgt,
        parse_matrix((d / "gt.txt").read_text()),
        np.array(corr.read_text().split(), dtype=np.int64) if corr.exists() else None,
        load_xyz(clean) if clean.exists() else tgt,
    )


def list_pairs(directory) -> list[Path]:
    d = Path(directory)
    pairs = sorted(p for p in d.iterdir() if p.is_dir() and (p / "src.xyz").exists())
    if not pairs:
        raise FileNotFoundError(f"no pair directories under {d}")
    return pairs
