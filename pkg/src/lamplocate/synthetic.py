"""Synthetic scene generation: rectangular frame lamps rendered over cluttered
backgrounds, with exact ground truth. Stands in for recorded footage in tests
and benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom2d import draw_segment, fill_convex_polygon
from .geometry import CameraIntrinsics, Pose, compose, look_at, project_points
from .mesh import BulbInfo, LampModel, TriangleMesh

BACKGROUND_BASE = 40
BACKGROUND_MAX = 120
FRAME_INTENSITY = 150
SURFACE_INTENSITY = 255

INTRINSICS_DEFAULT = CameraIntrinsics(fx=850.0, fy=850.0, cx=400.0, cy=300.0, width=800, height=600)


def frame_lamp_model(model_id: str, outer_w: float, outer_h: float,
                     inner_w: float, inner_h: float, name: str = "",
                     bulb: BulbInfo | None = None) -> LampModel:
    """Flat rectangular frame lamp: an outer rim around an inner light surface.

    The lamp lies in the z=0 plane of its model frame with the light surface
    facing -z (toward the floor); cameras view it from the z < 0 half space.
    """
    ow, oh = outer_w / 2, outer_h / 2
    iw, ih = inner_w / 2, inner_h / 2
    if not (0 < iw < ow and 0 < ih < oh):
        raise ValueError("inner rectangle must be strictly inside the outer one")
    outer = [(-ow, -oh), (ow, -oh), (ow, oh), (-ow, oh)]
    inner = [(-iw, -ih), (iw, -ih), (iw, ih), (-iw, ih)]
    verts = [(x, y, 0.0) for x, y in outer + inner]
    # Four trapezoid quads between the rims, wound so normals face -z.
    tris = []
    for i in range(4):
        o0, o1 = i, (i + 1) % 4
        i0, i1 = 4 + i, 4 + (i + 1) % 4
        tris.append((o0, i0, o1))
        tris.append((o1, i0, i1))
    mesh = TriangleMesh(np.array(verts), np.array(tris))
    surface = np.array([(x, y, 0.0) for x, y in inner])
    return LampModel(model_id=model_id, name=name or model_id, mesh=mesh,
                     light_surface=surface, bulb=bulb)


def default_lamp_models() -> list:
    """Two frame lamps with clearly different light-surface aspect ratios."""
    return [
        frame_lamp_model("m1", 1.30, 0.55, 1.20, 0.45, name="long twin-tube",
                         bulb=BulbInfo("Osram", "Lumilux", 36, 3350, 4000)),
        frame_lamp_model("m3", 0.75, 0.55, 0.65, 0.45, name="compact",
                         bulb=BulbInfo("Osram", "Dulux", 26, 1800, 4000)),
    ]


@dataclass
class LampPlacement:
    model_id: str
    pose: Pose  # object -> world


@dataclass
class SyntheticScene:
    placements: list  # LampPlacement
    camera: Pose  # world -> camera
    intrinsics: CameraIntrinsics = INTRINSICS_DEFAULT
    clutter_segments: int = 0
    clutter_gradient: bool = True
    noise_sigma: float = 0.0
    reflections: list = field(default_factory=list)  # (cx, cy, radius) saturated discs
    seed: int = 0


@dataclass
class GroundTruth:
    model_ids: list
    object_poses: list  # object -> camera
    surface_polygons: list  # projected light-surface corners, (k, 2) px


def scene_looking_at_lamp(model: LampModel, distance: float, tilt_deg: float,
                          azimuth_deg: float, yaw_deg: float = 0.0,
                          roll_deg: float = 0.0,
                          intr: CameraIntrinsics = INTRINSICS_DEFAULT,
                          aim_offset=(0.0, 0.0), **scene_kwargs) -> SyntheticScene:
    """One ceiling lamp at the world origin viewed from below.

    ``tilt_deg`` is the sight-line elevation above the lamp plane (90 = from
    straight below), ``azimuth_deg`` the direction around the lamp,
    ``yaw_deg`` rotates the lamp about its own normal, ``roll_deg`` rolls the
    camera about the sight line, and ``aim_offset`` shifts the look-at target
    to move the lamp off the image centre.
    """
    from .geometry import rotation_z

    lamp_pose = Pose(rotation_z(math.radians(yaw_deg)), np.zeros(3))
    e = math.radians(tilt_deg)
    a = math.radians(azimuth_deg)
    center = distance * np.array([math.cos(e) * math.cos(a),
                                  math.cos(e) * math.sin(a),
                                  -math.sin(e)])
    target = np.array([aim_offset[0], aim_offset[1], 0.0])
    camera = look_at(center, target, np.array([0.0, 0.0, 1.0]))
    if roll_deg:
        roll = Pose(rotation_z(math.radians(roll_deg)), np.zeros(3))
        camera = compose(roll, camera)
    return SyntheticScene(placements=[LampPlacement(model.model_id, lamp_pose)],
                          camera=camera, intrinsics=intr, **scene_kwargs)


def _project_polygon(intr: CameraIntrinsics, cam_points: np.ndarray):
    px, valid = project_points(intr, cam_points)
    if not valid.all():
        return None
    return px


def render_synthetic(scene: SyntheticScene, models: dict):
    """Render the scene to an 8-bit greyscale image plus ground truth.

    Light surfaces are hard-filled at saturation; frame faces at a mid
    intensity; the background (base + gradient + clutter + noise) never
    exceeds BACKGROUND_MAX. Deterministic for a given seed.
    """
    rng = np.random.default_rng(scene.seed)
    intr = scene.intrinsics
    h, w = intr.height, intr.width
    img = np.full((h, w), float(BACKGROUND_BASE))
    if scene.clutter_gradient:
        angle = rng.uniform(0, 2 * math.pi)
        gx, gy = math.cos(angle), math.sin(angle)
        xs, ys = np.meshgrid(np.arange(w), np.arange(h))
        ramp = (gx * xs + gy * ys)
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
        img += ramp * rng.uniform(10, 40)
    for _ in range(scene.clutter_segments):
        x0, y0 = rng.uniform(0, w), rng.uniform(0, h)
        ang = rng.uniform(0, 2 * math.pi)
        ln = rng.uniform(30, 200)
        x1, y1 = x0 + ln * math.cos(ang), y0 + ln * math.sin(ang)
        draw_segment(img, x0, y0, x1, y1, rng.uniform(60, BACKGROUND_MAX),
                     thickness=int(rng.integers(1, 3)))
    if scene.noise_sigma > 0:
        img += rng.normal(0, scene.noise_sigma, size=img.shape)
    np.clip(img, 0, BACKGROUND_MAX, out=img)

    truth = GroundTruth(model_ids=[], object_poses=[], surface_polygons=[])
    order = sorted(range(len(scene.placements)),
                   key=lambda i: -float(np.linalg.norm(
                       compose(scene.camera, scene.placements[i].pose).t)))
    for i in order:
        placement = scene.placements[i]
        model = models[placement.model_id]
        obj_to_cam = compose(scene.camera, placement.pose)
        outer = model.mesh.vertices[:4]
        inner = np.asarray(model.light_surface)
        outer_px = _project_polygon(intr, obj_to_cam.apply(outer))
        inner_px = _project_polygon(intr, obj_to_cam.apply(inner))
        if outer_px is None or inner_px is None:
            continue  # behind the camera; explicitly out of view
        fill_convex_polygon(img, outer_px, FRAME_INTENSITY)
        fill_convex_polygon(img, inner_px, SURFACE_INTENSITY)
        truth.model_ids.append(placement.model_id)
        truth.object_poses.append(obj_to_cam)
        truth.surface_polygons.append(inner_px)
    for cx, cy, radius in scene.reflections:
        xs, ys = np.meshgrid(np.arange(w), np.arange(h))
        disc = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
        img[disc] = SURFACE_INTENSITY
    return img.astype(np.uint8), truth
