"""Template registration: visible-edge selection, occlusion filtering and the template DB.

For every viewpoint of a discretized hemisphere the lamp mesh is reduced to
the edges a camera would actually see (sharp or outline edges, minus occluded
parts), which are projected into 2D segments plus oriented raster points and
stored in a text database for the matching stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geom2d
from .errors import DegenerateProjection, EmptyTemplate
from .geometry import CameraIntrinsics, Pose, look_at, pose_from_line, pose_to_line, project_points
from .mesh import BulbInfo, LampModel, TriangleMesh
from .rasterizer import depth_bias, rasterize_depth

SHARPNESS_DEFAULT = 0.92
SAMPLE_STEP_DEFAULT = 0.0015  # metres
COLLINEAR_TOL_PX = 0.5


def select_visible_edges(mesh: TriangleMesh, view_dir: np.ndarray, sharpness: float = SHARPNESS_DEFAULT):
    """Edges that are sharp or on the outline for a given viewing direction.

    An interior edge is kept when the dot product of its two face normals is
    below ``sharpness``, or when the faces straddle the view direction
    (outline). Boundary edges (single adjacent face) are always kept.
    Returns a list of (p0, p1) vertex-position pairs in model coordinates.
    """
    if not (-1.0 < sharpness < 1.0):
        raise ValueError("sharpness must lie in (-1, 1)")
    cz = np.asarray(view_dir, dtype=float)
    cz = cz / np.linalg.norm(cz)
    out = []
    for (i, j), faces in mesh.edge_faces().items():
        if len(faces) == 1:
            keep = True
        else:
            na, nb = mesh.normals[faces[0]], mesh.normals[faces[1]]
            keep = (na @ nb) < sharpness or (na @ cz) * (nb @ cz) <= 0
        if keep:
            out.append((mesh.vertices[i].copy(), mesh.vertices[j].copy()))
    return out


def _edge_samples(edge, step: float) -> np.ndarray:
    p0, p1 = np.asarray(edge[0], dtype=float), np.asarray(edge[1], dtype=float)
    length = np.linalg.norm(p1 - p0)
    n = max(int(math.ceil(length / step)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    return p0[None, :] + ts[:, None] * (p1 - p0)[None, :]


def _sample_visibility(mesh, edges, camera: Pose, intr: CameraIntrinsics, step: float):
    """Per-edge samples with their projections and depth-test visibility."""
    from scipy.ndimage import maximum_filter

    depth = rasterize_depth(mesh, camera, intr)
    # Edge samples sit on silhouette boundaries where the surface's own depth
    # slope across a pixel dwarfs any constant bias; testing against the 3x3
    # neighbourhood maximum keeps a surface from occluding its own rim while
    # real occluders (whole pixels nearer) still win.
    depth = maximum_filter(depth, size=3, mode="nearest")
    bias = depth_bias(depth)
    result = []
    for edge in edges:
        pts = _edge_samples(edge, step)
        cam = camera.apply(pts)
        if cam[0, 2] <= 0 or cam[-1, 2] <= 0:
            raise DegenerateProjection("edge endpoint at non-positive depth")
        px, valid = project_points(intr, cam)
        xi = np.round(px[:, 0]).astype(int)
        yi = np.round(px[:, 1]).astype(int)
        inside = valid & (xi >= 0) & (xi < intr.width) & (yi >= 0) & (yi < intr.height)
        visible = np.zeros(len(pts), dtype=bool)
        idx = np.flatnonzero(inside)
        if idx.size:
            visible[idx] = cam[idx, 2] <= depth[yi[idx], xi[idx]] + bias
        result.append((pts, cam, px, visible))
    return result


def filter_occlusions(mesh, edges, camera: Pose, intr: CameraIntrinsics, step: float = SAMPLE_STEP_DEFAULT):
    """Discretize edges at ``step`` (1-2 mm) and keep samples that pass the depth test."""
    if not (0.001 <= step <= 0.002):
        raise ValueError("sample step must be within [1 mm, 2 mm]")
    kept = []
    for pts, _, _, visible in _sample_visibility(mesh, edges, camera, intr, step):
        kept.extend(pts[visible])
    return [np.asarray(p) for p in kept]


@dataclass
class Template:
    """Projected visible edges of one model for one viewpoint.

    ``segments`` are merged collinear runs (x1, y1, x2, y2); ``points`` are
    the raster samples (x, y, theta) with theta the local tangent in [0, pi).
    ``points3d``/``tangents3d`` keep the model-frame sample positions and edge
    directions so the refinement stage can re-project under a perturbed pose.
    """

    model_id: str
    pose: Pose
    segments: np.ndarray  # (s, 4)
    points: np.ndarray  # (p, 3)
    bbox: np.ndarray  # (4,) x0 y0 x1 y1
    points3d: np.ndarray  # (p, 3)
    tangents3d: np.ndarray  # (p, 3)
    template_id: int = -1


def _merge_collinear(px: np.ndarray, tol: float = COLLINEAR_TOL_PX):
    """Split a projected polyline into maximal straight runs (point-to-line dist < tol).

    Returns a list of (start_index, end_index) pairs into ``px``.
    """
    n = len(px)
    runs = []
    i = 0
    while i < n - 1:
        j = i + 1
        while j + 1 < n:
            a, b = px[i], px[j + 1]
            mid = px[i + 1 : j + 1]
            dx, dy = b[0] - a[0], b[1] - a[1]
            norm = math.hypot(dx, dy)
            if norm < 1e-9:
                break
            dist = np.abs(dx * (mid[:, 1] - a[1]) - dy * (mid[:, 0] - a[0])) / norm
            if dist.max() >= tol:
                break
            j += 1
        runs.append((i, j))
        i = j
    return runs


def build_template(model: LampModel, camera: Pose, intr: CameraIntrinsics,
                   sharpness: float = SHARPNESS_DEFAULT,
                   step: float = SAMPLE_STEP_DEFAULT) -> Template:
    """Project the visible edge samples of ``model`` under ``camera`` into a Template."""
    view_dir = camera.r[2]  # camera z axis in model coordinates
    edges = select_visible_edges(model.mesh, view_dir, sharpness)
    try:
        per_edge = _sample_visibility(model.mesh, edges, camera, intr, step)
    except DegenerateProjection:
        raise EmptyTemplate("model is behind the camera")
    segments = []
    pts2d = []
    pts3d = []
    tans3d = []
    for model_pts, _, px, visible in per_edge:
        edge_dir = model_pts[-1] - model_pts[0]
        edge_dir = edge_dir / np.linalg.norm(edge_dir)
        # Contiguous visible runs along the edge become polylines.
        k = 0
        n = len(model_pts)
        while k < n:
            if not visible[k]:
                k += 1
                continue
            end = k
            while end + 1 < n and visible[end + 1]:
                end += 1
            if end > k:
                run_px = px[k : end + 1]
                run_3d = model_pts[k : end + 1]
                for a, b in _merge_collinear(run_px):
                    sa, sb = run_px[a], run_px[b]
                    theta = geom2d.segment_angle(sa[0], sa[1], sb[0], sb[1])
                    segments.append([sa[0], sa[1], sb[0], sb[1]])
                    for idx in range(a, b + 1):
                        pts2d.append([run_px[idx, 0], run_px[idx, 1], theta])
                        pts3d.append(run_3d[idx])
                        tans3d.append(edge_dir)
            k = end + 1
    if not pts2d:
        raise EmptyTemplate("no visible edge samples for this viewpoint")
    segments = np.asarray(segments, dtype=float)
    pts2d = np.asarray(pts2d, dtype=float)
    xs = np.concatenate([segments[:, [0, 2]].ravel(), pts2d[:, 0]])
    ys = np.concatenate([segments[:, [1, 3]].ravel(), pts2d[:, 1]])
    bbox = np.array([xs.min(), ys.min(), xs.max(), ys.max()])
    return Template(
        model_id=model.model_id,
        pose=camera,
        segments=segments,
        points=pts2d,
        bbox=bbox,
        points3d=np.asarray(pts3d, dtype=float),
        tangents3d=np.asarray(tans3d, dtype=float),
    )


@dataclass
class ViewpointGrid:
    """Discretized object-to-camera poses over the light-facing hemisphere."""

    poses: list

    @staticmethod
    def hemisphere(azimuth_step_deg: float = 20.0, elevation_step_deg: float = 20.0,
                   distances=(1.5, 3.0, 6.0, 10.0), min_elevation_deg: float = 10.0) -> "ViewpointGrid":
        """Viewpoints below the lamp plane (z < 0), all looking at the model origin.

        Elevation is measured from the lamp plane (90 deg = straight below);
        camera roll is fixed by aligning the image vertical with the model up
        axis, so in-plane lamp rotation is covered by the azimuth sweep.
        """
        poses = []
        elevations = np.arange(90.0, min_elevation_deg - 1e-9, -abs(elevation_step_deg))
        for el in elevations:
            if el >= 90.0 - 1e-9:
                azimuths = [0.0]
            else:
                azimuths = np.arange(0.0, 360.0, abs(azimuth_step_deg))
            for az in azimuths:
                for d in distances:
                    e, a = math.radians(el), math.radians(az)
                    center = d * np.array([math.cos(e) * math.cos(a),
                                           math.cos(e) * math.sin(a),
                                           -math.sin(e)])
                    poses.append(look_at(center, np.zeros(3), np.array([0.0, 0.0, 1.0])))
        return ViewpointGrid(poses)


def rolled_template(template: Template, roll: float, intr: CameraIntrinsics) -> Template:
    """Template as seen by the same camera rolled by ``roll`` about its axis.

    A camera roll rotates the projected content rigidly about the principal
    point (exact when fx == fy), so rolled viewpoints need no re-rendering.
    """
    if abs(intr.fx - intr.fy) > 1e-6 * intr.fx:
        raise ValueError("roll synthesis requires square pixels (fx == fy)")
    c, s = math.cos(roll), math.sin(roll)
    rot = np.array([[c, -s], [s, c]])
    center = np.array([intr.cx, intr.cy])

    def rot_px(pts):
        return (pts - center) @ rot.T + center

    segs = template.segments.copy()
    segs[:, :2] = rot_px(segs[:, :2])
    segs[:, 2:] = rot_px(segs[:, 2:])
    pts = template.points.copy()
    pts[:, :2] = rot_px(pts[:, :2])
    pts[:, 2] = np.mod(pts[:, 2] + roll, math.pi)
    xs = np.concatenate([segs[:, [0, 2]].ravel(), pts[:, 0]])
    ys = np.concatenate([segs[:, [1, 3]].ravel(), pts[:, 1]])
    roll_pose = Pose(
        np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3))
    from .geometry import compose

    return Template(
        model_id=template.model_id,
        pose=compose(roll_pose, template.pose),
        segments=segs,
        points=pts,
        bbox=np.array([xs.min(), ys.min(), xs.max(), ys.max()]),
        points3d=template.points3d.copy(),
        tangents3d=template.tangents3d.copy(),
    )


def pose_elevation_deg(pose: Pose) -> float:
    """Elevation of the viewpoint above the lamp plane, from the pose alone."""
    direction = -(pose.r.T @ pose.t)
    n = np.linalg.norm(direction)
    if n < 1e-12:
        return 90.0
    return math.degrees(math.asin(max(-1.0, min(1.0, -direction[2] / n))))


STEEP_ELEVATION_DEG = 55.0
STEEP_ROLL_STEP_DEG = 30.0


def _build_one(args):
    model, pose, intr, sharpness, step = args
    try:
        return build_template(model, pose, intr, sharpness, step)
    except EmptyTemplate:
        return None


def register_model(model: LampModel, grid: ViewpointGrid, intr: CameraIntrinsics,
                   sharpness: float = SHARPNESS_DEFAULT,
                   step: float = SAMPLE_STEP_DEFAULT,
                   steep_roll_step_deg: float = STEEP_ROLL_STEP_DEG,
                   steep_elevation_deg: float = STEEP_ELEVATION_DEG,
                   workers: int | None = None) -> list:
    """One Template per grid viewpoint; viewpoints with nothing visible are skipped.

    Near-vertical sight lines leave the camera roll unconstrained (it is the
    walking heading, not gravity), so for elevations above
    ``steep_elevation_deg`` each rendered template additionally gets rolled
    copies sweeping the full circle.

    Viewpoints are independent, so ``workers`` > 1 renders them with a
    process pool (results are assembled in grid order either way).
    """
    if not grid.poses:
        raise ValueError("viewpoint grid is empty")
    jobs = [(model, pose, intr, sharpness, step) for pose in grid.poses]
    if workers and workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(processes=workers) as pool:
            built = pool.map(_build_one, jobs, chunksize=8)
    else:
        built = [_build_one(job) for job in jobs]
    templates = []
    for pose, base in zip(grid.poses, built):
        if base is None:
            continue
        templates.append(base)
        if steep_roll_step_deg and pose_elevation_deg(pose) >= steep_elevation_deg:
            n_rolls = int(round(360.0 / steep_roll_step_deg))
            for k in range(1, n_rolls):
                templates.append(rolled_template(base, math.radians(k * steep_roll_step_deg), intr))
    return templates


@dataclass
class ModelEntry:
    model_id: str
    name: str
    light_surface: np.ndarray
    bulb: BulbInfo | None = None


@dataclass
class TemplateDatabase:
    """All registered models and their templates, with a line-oriented text format.

    Templates are projections for a specific camera, so the database records
    the intrinsics they were generated with.
    """

    models: dict = field(default_factory=dict)
    templates: list = field(default_factory=list)
    intrinsics: CameraIntrinsics | None = None

    def add_model(self, model: LampModel, templates) -> None:
        if model.model_id in self.models:
            raise ValueError(f"model {model.model_id} already registered")
        self.models[model.model_id] = ModelEntry(
            model.model_id, model.name, np.array(model.light_surface), model.bulb
        )
        for t in templates:
            t.template_id = len(self.templates)
            self.templates.append(t)

    def templates_for(self, model_id: str):
        return [t for t in self.templates if t.model_id == model_id]

    def save(self, path) -> None:
        lines = ["LAMPDB 1"]
        if self.intrinsics is not None:
            i = self.intrinsics
            lines.append(f"intr {i.fx:.9g} {i.fy:.9g} {i.cx:.9g} {i.cy:.9g} {i.width} {i.height}")
        for mid in sorted(self.models):
            entry = self.models[mid]
            lines.append(f"lamp {entry.model_id} {entry.name}")
            flat = " ".join(f"{v:.9g}" for v in entry.light_surface.reshape(-1))
            lines.append(f"surface {flat}")
            if entry.bulb is not None:
                b = entry.bulb
                lines.append(f"bulb {b.brand}|{b.series}|{b.power_w:g}|{b.flux_lm:g}|{b.color_k:g}")
        for mid in sorted(self.models):
            for t in self.templates:
                if t.model_id != mid:
                    continue
                lines.append(f"model {t.model_id}")
                lines.append(f"pose {pose_to_line(t.pose)}")
                lines.append("bbox " + " ".join(f"{v:.9g}" for v in t.bbox))
                for s in t.segments:
                    lines.append("seg " + " ".join(f"{v:.9g}" for v in s))
                for p in t.points:
                    lines.append("pt " + " ".join(f"{v:.9g}" for v in p))
                for p3, t3 in zip(t.points3d, t.tangents3d):
                    vals = list(p3) + list(t3)
                    lines.append("p3 " + " ".join(f"{v:.9g}" for v in vals))
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def load(path) -> "TemplateDatabase":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0].strip() != "LAMPDB 1":
            raise ValueError("not a LAMPDB version 1 file")
        db = TemplateDatabase()
        current: dict | None = None

        def close(block):
            if block is None:
                return
            t = Template(
                model_id=block["model"],
                pose=block["pose"],
                segments=np.array(block["seg"], dtype=float).reshape(-1, 4),
                points=np.array(block["pt"], dtype=float).reshape(-1, 3),
                bbox=np.array(block["bbox"], dtype=float),
                points3d=np.array(block["p3"], dtype=float).reshape(-1, 6)[:, :3]
                if block["p3"] else np.zeros((0, 3)),
                tangents3d=np.array(block["p3"], dtype=float).reshape(-1, 6)[:, 3:]
                if block["p3"] else np.zeros((0, 3)),
                template_id=len(db.templates),
            )
            db.templates.append(t)

        pending: dict = {}
        for raw in lines[1:]:
            tokens = raw.split(None, 1)
            if not tokens:
                continue
            key = tokens[0]
            rest = tokens[1] if len(tokens) > 1 else ""
            if key == "intr":
                fx, fy, cx, cy, w, h = rest.split()
                db.intrinsics = CameraIntrinsics(float(fx), float(fy), float(cx),
                                                 float(cy), int(w), int(h))
            elif key == "lamp":
                mid, _, name = rest.partition(" ")
                pending = {"id": mid, "name": name}
            elif key == "surface":
                vals = np.array([float(v) for v in rest.split()]).reshape(-1, 3)
                db.models[pending["id"]] = ModelEntry(pending["id"], pending["name"], vals)
            elif key == "bulb":
                brand, series, w, lm, k = rest.split("|")
                db.models[pending["id"]].bulb = BulbInfo(brand, series, float(w), float(lm), float(k))
            elif key == "model":
                close(current)
                current = {"model": rest.strip(), "seg": [], "pt": [], "p3": [], "bbox": None, "pose": None}
            elif key == "pose":
                current["pose"] = pose_from_line(rest)
            elif key == "bbox":
                current["bbox"] = [float(v) for v in rest.split()]
            elif key == "seg":
                current["seg"].append([float(v) for v in rest.split()])
            elif key == "pt":
                current["pt"].append([float(v) for v in rest.split()])
            elif key == "p3":
                current["p3"].append([float(v) for v in rest.split()])
            else:
                raise ValueError(f"unknown record type: {key}")
        close(current)
        return db
