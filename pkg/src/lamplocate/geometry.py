"""Rigid-body poses, pinhole projection and weighted pose averaging.

Conventions: a ``Pose`` maps points from its source frame into its target
frame, ``x_target = R @ x_source + t``. Object poses map model coordinates
into camera coordinates; detector poses map detector coordinates into the
world frame. Translations are metres, image coordinates are pixels with x
to the right and y down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAverage, EmptyInput, NonPositiveDepth

ROTATION_ATOL = 1e-7


def is_rotation(r: np.ndarray, atol: float = ROTATION_ATOL) -> bool:
    """True if ``r`` is orthonormal with determinant +1 within ``atol``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        return False
    if not np.allclose(r.T @ r, np.eye(3), atol=atol):
        return False
    return abs(np.linalg.det(r) - 1.0) <= atol


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_exp(rvec: np.ndarray) -> np.ndarray:
    """Rotation matrix for an axis-angle vector (Rodrigues)."""
    rvec = np.asarray(rvec, dtype=float)
    angle = float(np.linalg.norm(rvec))
    if angle < 1e-12:
        k = skew(rvec)
        return np.eye(3) + k + 0.5 * (k @ k)
    axis = rvec / angle
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix; angle in [0, pi]."""
    r = np.asarray(r, dtype=float)
    cos_angle = min(1.0, max(-1.0, 0.5 * (np.trace(r) - 1.0)))
    angle = math.acos(cos_angle)
    if angle < 1e-9:
        return 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if math.pi - angle < 1e-6:
        # Near pi the off-diagonal formula is ill-conditioned; use the symmetric part.
        s = 0.5 * (r + np.eye(3))
        axis = np.sqrt(np.maximum(np.diag(s), 0.0))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = s[:, k] / axis[k]
            axis[k] = math.sqrt(max(s[k, k], 0.0)) * 2 - axis[k]
        n = np.linalg.norm(axis)
        axis = axis / n if n > 0 else np.array([1.0, 0.0, 0.0])
        # Resolve the sign from the skew part (vanishes exactly at pi).
        w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        if w @ axis < 0:
            axis = -axis
        return axis * angle
    scale = angle / (2.0 * math.sin(angle))
    return scale * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])


def rotation_angle(r: np.ndarray) -> float:
    """Rotation angle in radians, in [0, pi]."""
    cos_angle = min(1.0, max(-1.0, 0.5 * (np.trace(np.asarray(r, dtype=float)) - 1.0)))
    return math.acos(cos_angle)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation matrix ``r`` (3x3) and translation ``t`` (3,) in metres."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        t = np.array(self.t, dtype=float).reshape(3)
        if not is_rotation(r):
            raise ValueError("rotation part is not in SO(3)")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.r.T + self.t

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m


@dataclass(frozen=True)
class WeightedPose:
    pose: Pose
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying ``b`` first, then ``a``."""
    return Pose(a.r @ b.r, a.r @ b.t + a.t)


def invert(p: Pose) -> Pose:
    rt = p.r.T
    return Pose(rt, -(rt @ p.t))


def project(intr: CameraIntrinsics, camera_point: np.ndarray) -> np.ndarray:
    """Pinhole projection of a camera-frame point with z > 0 to pixel (u, v)."""
    x, y, z = np.asarray(camera_point, dtype=float).reshape(3)
    if z <= 0:
        raise NonPositiveDepth(f"point depth {z} is not positive")
    return np.array([intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy])


def project_points(intr: CameraIntrinsics, camera_points: np.ndarray):
    """Vectorized projection. Returns (pixels (n,2), valid mask for z > 0).

    Pixels for invalid rows are filled with NaN instead of raising, so callers
    can drop behind-camera samples without losing the rest of the batch.
    """
    pts = np.asarray(camera_points, dtype=float).reshape(-1, 3)
    z = pts[:, 2]
    valid = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * pts[:, 0] / z + intr.cx
        v = intr.fy * pts[:, 1] / z + intr.cy
    px = np.stack([u, v], axis=1)
    px[~valid] = np.nan
    return px, valid


def average_rotation(rotations, weights) -> np.ndarray:
    """Weighted chordal mean on SO(3) via orthogonal projection of the matrix sum.

    The weighted sum of the input matrices is projected back onto SO(3)
    through its SVD, flipping the smallest singular direction when the sum
    has non-positive determinant. Note the weighting: detection fusion
    weights whole poses by score, and the rotation part inherits those
    weights so translation and rotation are averaged consistently (with
    equal weights this reduces to the plain unweighted projection).
    """
    rotations = list(rotations)
    weights = np.asarray(list(weights), dtype=float)
    if len(rotations) == 0 or weights.size == 0:
        raise EmptyInput("no rotations to average")
    if len(rotations) != weights.size:
        raise ValueError("rotations and weights must have equal length")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0:
        raise EmptyInput("total weight is zero")
    w = weights / total
    mean = np.zeros((3, 3))
    for wi, ri in zip(w, rotations):
        mean += wi * np.asarray(ri, dtype=float)
    mt = mean.T
    u, s, vt = np.linalg.svd(mt)
    det = np.linalg.det(mt)
    if det > 0:
        return vt.T @ u.T
    if abs(s[1] - s[2]) <= 1e-12:
        raise DegenerateAverage("projection onto SO(3) is not unique")
    h = np.diag([1.0, 1.0, -1.0])
    return vt.T @ h @ u.T


def average_pose(detections) -> Pose:
    """Score-weighted mean of poses: arithmetic mean of translations, chordal mean of rotations."""
    detections = list(detections)
    if not detections:
        raise EmptyInput("no detections to average")
    weights = np.array([d.weight for d in detections], dtype=float)
    total = weights.sum()
    if total <= 0:
        raise EmptyInput("total weight is zero")
    t = np.zeros(3)
    for d in detections:
        t += d.weight * d.pose.t
    t /= total
    r = average_rotation([d.pose.r for d in detections], weights)
    return Pose(r, t)


def pose_to_numbers(p: Pose) -> list:
    """Row-major rotation entries followed by the translation (12 numbers)."""
    return [float(v) for v in np.concatenate([p.r.reshape(9), p.t])]


def pose_from_numbers(values) -> Pose:
    v = np.asarray(list(values), dtype=float)
    if v.size != 12:
        raise ValueError(f"expected 12 numbers, got {v.size}")
    return Pose(v[:9].reshape(3, 3), v[9:])


def pose_to_line(p: Pose) -> str:
    return " ".join(f"{v:.9g}" for v in pose_to_numbers(p))


def pose_from_line(line: str) -> Pose:
    return pose_from_numbers(float(tok) for tok in line.split())


def look_at(camera_center: np.ndarray, target: np.ndarray, up_hint: np.ndarray) -> Pose:
    """World-to-camera pose for a camera at ``camera_center`` looking at ``target``.

    The camera z axis points at the target; ``up_hint`` fixes the roll (the
    image "up", i.e. -y in pixel coordinates, is aligned with it as closely
    as possible).
    """
    c = np.asarray(camera_center, dtype=float)
    fwd = np.asarray(target, dtype=float) - c
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("camera center coincides with the target")
    fwd = fwd / n
    up = np.asarray(up_hint, dtype=float)
    right = np.cross(-up, fwd)
    if np.linalg.norm(right) < 1e-9:
        # Degenerate hint parallel to the view axis; fall back to a fixed axis.
        alt = np.array([1.0, 0.0, 0.0])
        if abs(fwd @ alt) > 0.9:
            alt = np.array([0.0, 1.0, 0.0])
        right = np.cross(-alt, fwd)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])
    # Orthonormalize to cancel accumulated rounding.
    u, _, vt = np.linalg.svd(r)
    r = u @ vt
    return Pose(r, -(r @ c))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (QR of a Gaussian matrix with sign fix)."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    return Pose(random_rotation(rng), rng.normal(scale=scale, size=3))


@dataclass
class GeodesicSegment:
    """Helper for interpolating between two poses (used by trajectories)."""

    start: Pose
    end: Pose
    rel_rvec: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rel_rvec = rotation_log(self.start.r.T @ self.end.r)

    def at(self, u: float) -> Pose:
        r = self.start.r @ rotation_exp(u * self.rel_rvec)
        t = (1.0 - u) * self.start.t + u * self.end.t
        return Pose(r, t)
