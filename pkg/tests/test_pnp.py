import math

import numpy as np
import pytest

from lamplocate.errors import BehindCamera, NoConvergence
from lamplocate.geometry import (
    CameraIntrinsics,
    Pose,
    compose,
    project,
    rotation_angle,
    rotation_x,
    rotation_z,
)
from lamplocate.pnp import PoseCandidate, PoseFilterConfig, filter_pose, solve_pnp

INTR = CameraIntrinsics(fx=850, fy=850, cx=400, cy=300, width=800, height=600)

RECT = np.array([
    [-0.6, -0.225, 0.0],
    [0.6, -0.225, 0.0],
    [0.6, 0.225, 0.0],
    [-0.6, 0.225, 0.0],
])


def lamp_view(distance=3.0, tilt_deg=60.0, yaw_deg=15.0) -> Pose:
    """Object->camera pose of a ceiling lamp seen from below at an angle."""
    from lamplocate.geometry import look_at

    e = math.radians(tilt_deg)
    center = distance * np.array([math.cos(e), 0.0, -math.sin(e)])
    camera = look_at(center, np.zeros(3), np.array([0.0, 0.0, 1.0]))
    lamp = Pose(rotation_z(math.radians(yaw_deg)), np.zeros(3))
    return compose(camera, lamp)


def pose_error(a: Pose, b: Pose):
    """(translation err, rotation err rad) up to the rectangle's 180-degree symmetry."""
    dt = float(np.linalg.norm(a.t - b.t))
    flip = rotation_z(math.pi)
    dr = min(rotation_angle(a.r @ b.r.T), rotation_angle((a.r @ flip) @ b.r.T))
    return dt, dr


class TestSolvePnp:
    def test_exact_round_trip(self):
        pose = lamp_view()
        corners_px = np.array([project(INTR, pose.apply(c)) for c in RECT])
        cand = solve_pnp(corners_px, RECT, INTR)
        dt, dr = pose_error(cand.pose, pose)
        assert dt < 1e-6
        assert dr < 1e-6
        assert cand.reproj_error < 1e-6

    def test_round_trip_any_corner_order(self):
        pose = lamp_view(distance=4.0, tilt_deg=45.0, yaw_deg=40.0)
        corners_px = np.array([project(INTR, pose.apply(c)) for c in RECT])
        for shift in range(4):
            order = [(shift + i) % 4 for i in range(4)]
            cand = solve_pnp(corners_px[order], RECT, INTR)
            dt, dr = pose_error(cand.pose, pose)
            assert dt < 1e-6 and dr < 1e-6
        reflected = corners_px[::-1]
        cand = solve_pnp(reflected, RECT, INTR)
        dt, dr = pose_error(cand.pose, pose)
        assert dt < 1e-6 and dr < 1e-6

    def test_noise_monte_carlo(self):
        # +-0.5 px uniform noise at 3 m: median translation error below 5 cm.
        rng = np.random.default_rng(0)
        errors = []
        for seed in range(100):
            pose = lamp_view(distance=3.0, tilt_deg=70.0, yaw_deg=float(rng.uniform(0, 90)))
            corners_px = np.array([project(INTR, pose.apply(c)) for c in RECT])
            noisy = corners_px + rng.uniform(-0.5, 0.5, size=corners_px.shape)
            cand = solve_pnp(noisy, RECT, INTR)
            dt, _ = pose_error(cand.pose, pose)
            errors.append(dt)
        assert float(np.median(errors)) < 0.05

    def test_collinear_corners_raise(self):
        corners = np.array([[100, 100], [200, 100], [300, 100], [400, 100]], dtype=float)
        with pytest.raises((NoConvergence, BehindCamera)):
            solve_pnp(corners, RECT, INTR)

    def test_reprojection_error_nonnegative(self):
        pose = lamp_view()
        corners_px = np.array([project(INTR, pose.apply(c)) for c in RECT])
        cand = solve_pnp(corners_px + 2.0, RECT, INTR)
        assert cand.reproj_error >= 0


class TestFilterPose:
    CFG = PoseFilterConfig()

    def test_fronto_parallel_kept(self):
        # Camera straight below the lamp, looking up: world up = optical axis.
        pose = Pose(rotation_x(math.pi), [0, 0, 3.0])  # lamp faces the camera
        cand = PoseCandidate(pose=pose, blob_id=0, reproj_error=0.0)
        keep, reason = filter_pose(cand, self.CFG, camera_up_hint=[0, 0, 1])
        assert keep, reason

    def test_distance_reject(self):
        pose = Pose(rotation_x(math.pi), [0, 0, 20.0])
        cand = PoseCandidate(pose=pose, blob_id=0, reproj_error=0.0)
        keep, reason = filter_pose(cand, self.CFG, camera_up_hint=[0, 0, 1])
        assert not keep and reason == "distance"

    def test_roll_reject(self):
        # Oblique view of the lamp, then roll the camera 45 degrees.
        obj = lamp_view(distance=3.0, tilt_deg=50.0)
        rolled = compose(Pose(rotation_z(math.radians(45)), np.zeros(3)), obj)
        up = rolled.r @ np.array([0.0, 0.0, 1.0])  # world up through the same roll
        # up hint deliberately NOT rolled: the detector believes the camera is upright.
        up_unrolled = obj.r @ np.array([0.0, 0.0, 1.0])
        cand = PoseCandidate(pose=rolled, blob_id=0, reproj_error=0.0)
        keep, reason = filter_pose(cand, self.CFG, camera_up_hint=up_unrolled)
        assert not keep and reason == "roll"

    def test_tilt_reject(self):
        # Sight line nearly parallel to the ceiling: tilt below 10 degrees.
        from lamplocate.geometry import look_at

        obj = lamp_view(distance=5.0, tilt_deg=4.0)
        e = math.radians(4.0)
        center = 5.0 * np.array([math.cos(e), 0.0, -math.sin(e)])
        camera = look_at(center, np.zeros(3), np.array([0.0, 0.0, 1.0]))
        up_cam = camera.r @ np.array([0.0, 0.0, 1.0])
        cand = PoseCandidate(pose=obj, blob_id=0, reproj_error=0.0)
        keep, reason = filter_pose(cand, self.CFG, camera_up_hint=up_cam)
        assert not keep and reason == "tilt"

    def test_unknown_orientation_distance_only(self):
        pose = Pose(rotation_x(math.pi), [0, 0, 3.0])
        cand = PoseCandidate(pose=pose, blob_id=0, reproj_error=0.0)
        keep, _ = filter_pose(cand, self.CFG, camera_up_hint=None)
        assert keep

    def test_order_independent_any_failure_rejects(self):
        # A pose failing distance also fails regardless of hint handling.
        pose = Pose(rotation_x(math.pi), [0, 0, 0.1])
        cand = PoseCandidate(pose=pose, blob_id=0, reproj_error=0.0)
        for hint in (None, [0, 0, 1], [0, -1, 0]):
            keep, reason = filter_pose(cand, self.CFG, camera_up_hint=hint)
            assert not keep and reason == "distance"
