"""Shared test utilities: pose errors modulo lamp symmetry, scene sampling."""

import math

import numpy as np

from lamplocate.geometry import Pose, rotation_angle, rotation_z
from lamplocate.synthetic import render_synthetic, scene_looking_at_lamp


def pose_error(a: Pose, b: Pose):
    """(translation metres, rotation radians), rotation up to the rectangle's
    180-degree symmetry about the lamp normal."""
    dt = float(np.linalg.norm(a.t - b.t))
    flip = rotation_z(math.pi)
    dr = min(rotation_angle(a.r @ b.r.T), rotation_angle((a.r @ flip) @ b.r.T))
    return dt, dr


def random_lamp_scene(rng, model, distance_range=(1.5, 8.0), tilt_range=(15.0, 90.0),
                      seed=0, **kwargs):
    d = float(rng.uniform(*distance_range))
    tilt = float(rng.uniform(*tilt_range))
    az = float(rng.uniform(0, 360))
    yaw = float(rng.uniform(0, 360))
    return scene_looking_at_lamp(model, distance=d, tilt_deg=tilt, azimuth_deg=az,
                                 yaw_deg=yaw, seed=seed, **kwargs)


def render_scene(scene, models):
    img, truth = render_synthetic(scene, models)
    camera_up = list(scene.camera.r @ np.array([0.0, 0.0, 1.0]))
    return img, truth, camera_up
