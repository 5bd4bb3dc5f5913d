"""Planar PnP from 4 corner correspondences, and plausibility filters for the result.

The solver seeds a Levenberg-Marquardt reprojection minimization from a
homography decomposition of the plane-to-image mapping. Because the polygon
fitter determines corner order only up to rotation and reflection, all 8
equivalent orderings are tried and the lowest-error pose is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NoConvergence
from .geometry import CameraIntrinsics, Pose, rotation_angle, rotation_exp, rotation_log, rotation_z
from .optim import levenberg_marquardt


@dataclass
class PoseCandidate:
    pose: Pose  # object -> camera
    blob_id: int
    reproj_error: float  # px RMS
    model_id: str = ""


@dataclass
class PoseFilterConfig:
    distance_min: float = 0.5  # metres
    distance_max: float = 12.0
    roll_limit_deg: float = 20.0
    tilt_min_deg: float = 10.0
    tilt_max_deg: float = 90.0

    def __post_init__(self):
        if self.distance_min >= self.distance_max:
            raise ValueError("distance_min must be below distance_max")
        if self.roll_limit_deg <= 0:
            raise ValueError("roll limit must be positive")
        if not (0 <= self.tilt_min_deg <= self.tilt_max_deg <= 90):
            raise ValueError("tilt range must lie within [0, 90] degrees")


def _plane_basis(object_corners: np.ndarray):
    """Orthonormal in-plane basis (e1, e2) and origin for coplanar corners."""
    origin = object_corners.mean(axis=0)
    centered = object_corners - origin
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    e1, e2 = vt[0], vt[1]
    return origin, e1, e2


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """DLT homography mapping src (n,2) to dst (n,2)."""
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-9 * s[0]:
        raise NoConvergence("degenerate correspondences (rank-deficient homography)")
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) < 1e-12:
        raise NoConvergence("homography at infinity")
    return h / h[2, 2]


def _pose_from_homography(h: np.ndarray, intr: CameraIntrinsics) -> tuple:
    """(R, t) of the plane frame in camera coordinates from H = K [r1 r2 t]."""
    m = np.linalg.inv(intr.matrix()) @ h
    n1, n2 = np.linalg.norm(m[:, 0]), np.linalg.norm(m[:, 1])
    if n1 < 1e-12 or n2 < 1e-12:
        raise NoConvergence("degenerate homography columns")
    scale = 2.0 / (n1 + n2)
    if m[2, 2] < 0:
        scale = -scale  # plane must sit in front of the camera
    r1 = scale * m[:, 0]
    r2 = scale * m[:, 1]
    r3 = np.cross(r1, r2)
    rough = np.stack([r1, r2, r3], axis=1)
    u, _, vt = np.linalg.svd(rough)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, 2] = -u[:, 2]
        r = u @ vt
    t = scale * m[:, 2]
    return r, t


def _orderings(n: int = 4):
    base = list(range(n))
    for s in range(n):
        yield [base[(s + i) % n] for i in range(n)]
    rev = base[::-1]
    for s in range(n):
        yield [rev[(s + i) % n] for i in range(n)]


def solve_pnp(image_corners: np.ndarray, object_corners: np.ndarray,
              intr: CameraIntrinsics, blob_id: int = -1, model_id: str = "",
              max_iter: int = 100) -> PoseCandidate:
    """Object pose minimizing corner reprojection error (px RMS).

    Raises NoConvergence for degenerate input or an exhausted iteration
    budget, BehindCamera when the best solution puts the surface at z <= 0.
    """
    return solve_pnp_hypotheses(image_corners, object_corners, intr,
                                blob_id=blob_id, model_id=model_id,
                                max_iter=max_iter)[0]


def solve_pnp_hypotheses(image_corners: np.ndarray, object_corners: np.ndarray,
                         intr: CameraIntrinsics, blob_id: int = -1, model_id: str = "",
                         max_iter: int = 100, max_hypotheses: int = 2) -> list:
    """Distinct pose hypotheses ordered best-first.

    Four coplanar points admit a two-fold tilt ambiguity whose branches both
    reproject almost exactly; pixel noise can make either branch win the
    error comparison. Downstream template matching can tell them apart, so
    up to ``max_hypotheses`` rotationally-distinct solutions are returned.
    """
    image_corners = np.asarray(image_corners, dtype=float).reshape(-1, 2)
    object_corners = np.asarray(object_corners, dtype=float).reshape(-1, 3)
    if len(image_corners) != len(object_corners):
        raise ValueError("corner count mismatch")
    # (Near-)collinear image corners leave the pose unconstrained; refuse
    # rather than return whatever the optimizer wanders to.
    span = float(np.ptp(image_corners, axis=0).max())
    areas = [
        abs((image_corners[j] - image_corners[i]) @ np.array([[0, -1], [1, 0]])
            @ (image_corners[k] - image_corners[i])) / 2
        for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))
    ]
    if max(areas) < 1e-6 * max(span, 1.0) ** 2:
        raise NoConvergence("image corners are collinear")
    origin, e1, e2 = _plane_basis(object_corners)
    plane2d = np.stack([(object_corners - origin) @ e1, (object_corners - origin) @ e2], axis=1)
    best = None

    def residuals_for(order):
        target = image_corners[order]

        def residuals(params):
            r = rotation_exp(params[:3])
            t = params[3:]
            cam = object_corners @ r.T + t
            z = cam[:, 2]
            bad = z <= 1e-9
            z = np.where(bad, 1e-9, z)
            u = intr.fx * cam[:, 0] / z + intr.cx
            v = intr.fy * cam[:, 1] / z + intr.cy
            res = np.stack([u, v], axis=1) - target
            res[bad] = 1e6
            return res.reshape(-1)

        return residuals

    behind = False
    solutions = []
    for order in _orderings(len(image_corners)):
        try:
            h = _homography(plane2d, image_corners[order])
            r_plane, t_plane = _pose_from_homography(h, intr)
        except NoConvergence:
            continue
        # Plane frame -> object frame: x_cam = R_p (B^T (x_obj - origin)) + t_p
        basis = np.stack([e1, e2, np.cross(e1, e2)], axis=1)
        r0 = r_plane @ basis.T
        t0 = t_plane - r0 @ origin
        u, _, vt = np.linalg.svd(r0)
        r0 = u @ vt
        if np.linalg.det(r0) < 0:
            continue
        x0 = np.concatenate([rotation_log(r0), t0])
        x, cost, converged = levenberg_marquardt(residuals_for(order), x0, max_iter=max_iter)
        if not converged:
            continue
        pose = Pose(rotation_exp(x[:3]), x[3:])
        depths = pose.apply(object_corners)[:, 2]
        if np.min(depths) <= 0:
            behind = True
            continue
        rms = math.sqrt(cost / len(image_corners))
        # Planar targets also admit a mirror solution (reflected
        # correspondence) whose surface faces away from the camera; a lamp
        # blob implies the emitting side faces us, so facing poses sort first.
        normal_cam = pose.r @ np.array([0.0, 0.0, -1.0])
        facing = float(normal_cam @ pose.t) < 0
        solutions.append(((not facing, rms), pose, rms))
    if not solutions:
        if behind:
            raise BehindCamera("every corner ordering puts the surface behind the camera")
        raise NoConvergence("no corner ordering produced a converged pose")
    solutions.sort(key=lambda s: s[0])
    best_rms = solutions[0][2]
    out = []
    for key, pose, rms in solutions:
        if rms > max(2.0, 4.0 * best_rms) and out:
            break  # a branch this much worse is a misfit, not an ambiguity twin
        distinct = all(
            rotation_angle(pose.r @ prev.pose.r.T) > math.radians(5.0)
            and rotation_angle(pose.r @ rotation_z(math.pi) @ prev.pose.r.T) > math.radians(5.0)
            for prev in out
        )
        if distinct:
            out.append(PoseCandidate(pose=pose, blob_id=blob_id, reproj_error=rms,
                                     model_id=model_id))
        if len(out) >= max_hypotheses:
            break
    return out


def filter_pose(cand: PoseCandidate, cfg: PoseFilterConfig, camera_up_hint) -> tuple:
    """(keep, reason) plausibility test on distance, roll and view tilt.

    ``camera_up_hint`` is the world up direction expressed in camera
    coordinates; pass None when the camera orientation is unknown, which
    skips the roll and tilt tests (only distance can then reject).
    """
    t = cand.pose.t
    dist = float(np.linalg.norm(t))
    if not (cfg.distance_min <= dist <= cfg.distance_max):
        return False, "distance"
    if camera_up_hint is None:
        return True, ""
    up = np.asarray(camera_up_hint, dtype=float)
    n = np.linalg.norm(up)
    if n < 1e-9:
        return True, ""
    up = up / n
    view = t / dist
    # Tilt: elevation of the sight line above the ceiling plane (plane normal to "up").
    tilt = math.degrees(math.asin(max(-1.0, min(1.0, float(view @ up)))))
    if not (cfg.tilt_min_deg <= tilt <= cfg.tilt_max_deg):
        return False, "tilt"
    # Roll: in-image angle between the lamp's facing direction and straight "down".
    # For an upright camera a ceiling lamp faces down-image; a rolled pose
    # swings that projection sideways. The test only makes sense when both
    # projections have real magnitude: near-fronto lamps and near-vertical
    # sight lines leave the roll unobservable (their image components are
    # numerical noise), so they pass.
    min_component = math.sin(math.radians(10.0))
    normal_obj = np.array([0.0, 0.0, -1.0])  # light surface faces -z in model frame
    n_cam = cand.pose.r @ normal_obj
    n_img = n_cam[:2]
    u_img = up[:2]
    if np.linalg.norm(n_img) > min_component and np.linalg.norm(u_img) > min_component:
        down = -u_img / np.linalg.norm(u_img)
        ni = n_img / np.linalg.norm(n_img)
        roll = math.degrees(math.acos(max(-1.0, min(1.0, float(ni @ down)))))
        if roll > cfg.roll_limit_deg:
            return False, "roll"
    return True, ""
