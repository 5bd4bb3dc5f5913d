"""Directional chamfer matching restricted to regions of interest.

The matcher builds, per ROI, a stack of 60 orientation channels: edge
segments are binned by quantized direction, each bin gets an exact Euclidean
distance transform, and a circular forward/backward recursion blends the
channels with a per-step penalty of ``lam * pi/60`` (``lam`` is the
orientation weighting in pixels per radian). A per-channel cumulative sum
along the bin direction turns segment costs into two lookups, and a
box-smoothed copy of the channels drives the final pose refinement.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import lines
from .errors import EmptyROI, NoTemplates, OutOfROI, TooFewPoints
from .geom2d import bresenham, segment_angle
from .geometry import CameraIntrinsics, Pose, rotation_angle, rotation_exp, rotation_log
from .optim import levenberg_marquardt
from .registration import Template, TemplateDatabase

ORIENTATION_BINS = 60
DELTA_THETA = math.pi / ORIENTATION_BINS
LAMBDA_DEFAULT = 100.0  # px per radian of orientation difference
ROI_MARGIN_DEFAULT = 12  # px
POSITION_TOL_DEFAULT = 0.4  # metres along the sight line
ANGLE_TOL_DEFAULT = 25.0  # degrees


def quantize_angle(theta: float) -> int:
    # Bin centres sit at multiples of pi/60 so that exactly horizontal and
    # vertical segments (the common case for building interiors) integrate
    # along drift-free digital lines.
    return int(round(theta / DELTA_THETA)) % ORIENTATION_BINS


def bin_center(b: int) -> float:
    return b * DELTA_THETA


@dataclass
class StageTimes:
    edge_ms: float = 0.0
    dist_ms: float = 0.0
    rec_ms: float = 0.0
    integ_ms: float = 0.0
    smooth_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return self.edge_ms + self.dist_ms + self.rec_ms + self.integ_ms + self.smooth_ms

    def add(self, other: "StageTimes") -> None:
        self.edge_ms += other.edge_ms
        self.dist_ms += other.dist_ms
        self.rec_ms += other.rec_ms
        self.integ_ms += other.integ_ms
        self.smooth_ms += other.smooth_ms


@dataclass
class DirectionalTensor:
    x0: int
    y0: int
    width: int
    height: int
    lam: float
    stage: str  # edges | dt | dt3v | idt3v | smoothed
    channels: np.ndarray  # (60, h, w) float32, joint location/orientation distance
    integral: np.ndarray | None = None  # (60, h, w) float32 directional cumulative sums
    smoothed: np.ndarray | None = None  # (60, h, w) float32, 3x3 box per channel
    segments: list = field(default_factory=list)
    timings: StageTimes = field(default_factory=StageTimes)
    line_axis: list = field(default_factory=list)  # per bin: "x" or "y"
    line_shift: list = field(default_factory=list)  # per bin: rounded offsets along major axis

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x0 + self.width and self.y0 <= y < self.y0 + self.height


def _line_table(b: int, width: int, height: int):
    """Digital-line partition for a bin: every pixel belongs to one discrete
    line along the bin center direction; returns (axis, shift array)."""
    theta = bin_center(b)
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) >= abs(s):
        slope = s / c
        return "x", np.round(slope * np.arange(width)).astype(np.int64)
    slope = c / s
    return "y", np.round(slope * np.arange(height)).astype(np.int64)


def build_tensor(img: np.ndarray, roi, lam: float = LAMBDA_DEFAULT, smooth: bool = True,
                 edge_high: float = lines.HYST_HIGH, edge_low: float = lines.HYST_LOW,
                 segments: list | None = None) -> DirectionalTensor:
    """All stages of the directional tensor for one ROI, with per-stage timings.

    ``roi`` is (x0, y0, x1, y1), half-open, clamped to the image. Raises
    EmptyROI when no edge segments are found inside it. Passing ``segments``
    (ROI-local) skips the detector and builds the tensor from them directly.
    """
    img = np.asarray(img)
    ih, iw = img.shape
    x0, y0, x1, y1 = (int(v) for v in roi)
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, iw), min(y1, ih)
    w, h = x1 - x0, y1 - y0
    if w <= 0 or h <= 0:
        raise ValueError("ROI has no area")

    t0 = time.perf_counter()
    if segments is None:
        segments = lines.detect_segments(img[y0:y1, x0:x1], high=edge_high, low=edge_low)
    bins = np.zeros((ORIENTATION_BINS, h, w), dtype=bool)
    for seg in segments:
        b = quantize_angle(seg.angle)
        chain = bresenham(int(round(seg.x0)), int(round(seg.y0)),
                          int(round(seg.x1)), int(round(seg.y1)))
        xs = np.clip(chain[:, 0], 0, w - 1)
        ys = np.clip(chain[:, 1], 0, h - 1)
        bins[b, ys, xs] = True
    t1 = time.perf_counter()
    if not segments:
        raise EmptyROI("no edge segments inside the ROI")

    big = math.hypot(w, h) + lam * math.pi
    channels = np.empty((ORIENTATION_BINS, h, w), dtype=np.float32)
    for b in range(ORIENTATION_BINS):
        if bins[b].any():
            channels[b] = ndimage.distance_transform_edt(~bins[b]).astype(np.float32)
        else:
            channels[b] = big
    t2 = time.perf_counter()

    penalty = np.float32(lam * DELTA_THETA)
    for o in range(1, 2 * ORIENTATION_BINS):
        i = o % ORIENTATION_BINS
        np.minimum(channels[i], channels[i - 1] + penalty, out=channels[i])
    for o in range(2 * ORIENTATION_BINS - 2, -1, -1):
        i = o % ORIENTATION_BINS
        np.minimum(channels[i], channels[(i + 1) % ORIENTATION_BINS] + penalty, out=channels[i])
    t3 = time.perf_counter()

    integral = np.zeros_like(channels)
    line_axis, line_shift = [], []
    xs_all = np.arange(w)
    ys_all = np.arange(h)
    for b in range(ORIENTATION_BINS):
        axis, shift = _line_table(b, w, h)
        line_axis.append(axis)
        line_shift.append(shift)
        if axis == "x":
            c_lo = 0 - int(shift.max())
            c_hi = (h - 1) - int(shift.min())
            cs = np.arange(c_lo, c_hi + 1)
            yy = cs[:, None] + shift[None, :]
            valid = (yy >= 0) & (yy < h)
            vals = np.where(valid, channels[b][np.clip(yy, 0, h - 1), xs_all[None, :]], 0.0)
            acc = np.cumsum(vals, axis=1, dtype=np.float64)
            xb = np.broadcast_to(xs_all[None, :], yy.shape)
            integral[b][yy[valid], xb[valid]] = acc[valid]
        else:
            c_lo = 0 - int(shift.max())
            c_hi = (w - 1) - int(shift.min())
            cs = np.arange(c_lo, c_hi + 1)
            xx = cs[:, None] + shift[None, :]
            valid = (xx >= 0) & (xx < w)
            vals = np.where(valid, channels[b][ys_all[None, :], np.clip(xx, 0, w - 1)], 0.0)
            acc = np.cumsum(vals, axis=1, dtype=np.float64)
            yb = np.broadcast_to(ys_all[None, :], xx.shape)
            integral[b][yb[valid], xx[valid]] = acc[valid]
    t4 = time.perf_counter()

    smoothed = None
    if smooth:
        smoothed = np.empty_like(channels)
        for b in range(ORIENTATION_BINS):
            smoothed[b] = ndimage.uniform_filter(channels[b], size=3, mode="nearest")
    t5 = time.perf_counter()

    return DirectionalTensor(
        x0=x0, y0=y0, width=w, height=h, lam=lam,
        stage="smoothed" if smooth else "idt3v",
        channels=channels, integral=integral, smoothed=smoothed, segments=segments,
        timings=StageTimes(
            edge_ms=(t1 - t0) * 1e3, dist_ms=(t2 - t1) * 1e3, rec_ms=(t3 - t2) * 1e3,
            integ_ms=(t4 - t3) * 1e3, smooth_ms=(t5 - t4) * 1e3,
        ),
        line_axis=line_axis, line_shift=line_shift,
    )


def _segment_sum(tensor: DirectionalTensor, b: int, ax: float, ay: float, bx: float, by: float):
    """(sum of channel values, sample count) along the digital line between
    two ROI-local endpoints, evaluated from the integral channel."""
    shift = tensor.line_shift[b]
    h, w = tensor.height, tensor.width
    integ = tensor.integral[b]
    chan = tensor.channels[b]
    if tensor.line_axis[b] == "x":
        p0, p1 = (ax, ay), (bx, by)
        if p0[0] > p1[0]:
            p0, p1 = p1, p0
        xa = min(max(int(round(p0[0])), 0), w - 1)
        ya = min(max(int(round(p0[1])), 0), h - 1)
        xb = min(max(int(round(p1[0])), 0), w - 1)
        if xa > xb:
            raise OutOfROI("segment projects outside the ROI")
        c = ya - shift[xa]
        yb = c + shift[xb]
        if not (0 <= yb < h):
            raise OutOfROI("digital line leaves the ROI")
        return float(integ[yb, xb] - integ[ya, xa] + chan[ya, xa]), xb - xa + 1
    p0, p1 = (ax, ay), (bx, by)
    if p0[1] > p1[1]:
        p0, p1 = p1, p0
    ya = min(max(int(round(p0[1])), 0), h - 1)
    xa = min(max(int(round(p0[0])), 0), w - 1)
    yb = min(max(int(round(p1[1])), 0), h - 1)
    if ya > yb:
        raise OutOfROI("segment projects outside the ROI")
    c = xa - shift[ya]
    xb = c + shift[yb]
    if not (0 <= xb < w):
        raise OutOfROI("digital line leaves the ROI")
    return float(integ[yb, xb] - integ[ya, xa] + chan[ya, xa]), yb - ya + 1


def fdcm_cost(tensor: DirectionalTensor, template: Template, placement) -> float:
    """Average joint-distance along the template placed at a 2D offset.

    The cost is the mean channel value over the rasterized template segments,
    each evaluated in its quantized orientation channel via two integral
    lookups. Raises OutOfROI when any placed endpoint leaves the ROI.
    """
    dx, dy = float(placement[0]), float(placement[1])
    total = 0.0
    count = 0
    from .geom2d import segment_angle

    for seg in template.segments:
        ax = seg[0] + dx - tensor.x0
        ay = seg[1] + dy - tensor.y0
        bx = seg[2] + dx - tensor.x0
        by = seg[3] + dy - tensor.y0
        for x, y in ((ax, ay), (bx, by)):
            if not (0 <= x < tensor.width and 0 <= y < tensor.height):
                raise OutOfROI("template endpoint outside the ROI")
        b = quantize_angle(segment_angle(ax, ay, bx, by))
        s, n = _segment_sum(tensor, b, ax, ay, bx, by)
        total += s
        count += n
    if count == 0:
        raise OutOfROI("template has no rasterized samples inside the ROI")
    return total / count


def pose_closeness(candidate_pose: Pose, template_pose: Pose):
    """(range difference in metres, orientation difference in degrees) between
    a pose hypothesis and a template viewpoint, after factoring out where in
    the image the object sits (template matching shifts in 2D, so only the
    sight-line distance and the relative orientation have to agree)."""
    tc = candidate_pose.t
    dc = float(np.linalg.norm(tc))
    dt = float(np.linalg.norm(template_pose.t))
    if dc < 1e-9:
        return math.inf, math.inf
    v = tc / dc
    ez = np.array([0.0, 0.0, 1.0])
    axis = np.cross(v, ez)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        align = np.eye(3) if v[2] > 0 else rotation_exp(np.array([math.pi, 0.0, 0.0]))
    else:
        angle = math.acos(max(-1.0, min(1.0, float(v @ ez))))
        align = rotation_exp(axis / n * angle)
    centered = align @ candidate_pose.r
    diff = math.degrees(rotation_angle(centered @ template_pose.r.T))
    return abs(dc - dt), diff


_CLOSENESS_CACHE: dict = {}


def _template_arrays(db: TemplateDatabase):
    key = (id(db), len(db.templates))
    cached = _CLOSENESS_CACHE.get(id(db))
    if cached is not None and cached[0] == key:
        return cached[1], cached[2]
    ranges = np.array([float(np.linalg.norm(t.pose.t)) for t in db.templates])
    rotations = np.stack([t.pose.r for t in db.templates]) if db.templates else np.zeros((0, 3, 3))
    _CLOSENESS_CACHE[id(db)] = (key, ranges, rotations)
    return ranges, rotations


def select_templates(db: TemplateDatabase, candidate_pose: Pose,
                     position_tol: float = POSITION_TOL_DEFAULT,
                     angle_tol_deg: float = ANGLE_TOL_DEFAULT) -> list:
    """Templates of every model whose viewpoint is close to the hypothesis."""
    if not db.templates:
        return []
    ranges, rotations = _template_arrays(db)
    tc = candidate_pose.t
    dc = float(np.linalg.norm(tc))
    if dc < 1e-9:
        return []
    v = tc / dc
    ez = np.array([0.0, 0.0, 1.0])
    axis = np.cross(v, ez)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        align = np.eye(3) if v[2] > 0 else rotation_exp(np.array([math.pi, 0.0, 0.0]))
    else:
        angle = math.acos(max(-1.0, min(1.0, float(v @ ez))))
        align = rotation_exp(axis / n * angle)
    centered = align @ candidate_pose.r
    traces = np.einsum("ij,nij->n", centered, rotations)
    angles = np.degrees(np.arccos(np.clip((traces - 1.0) / 2.0, -1.0, 1.0)))
    keep = (np.abs(ranges - dc) <= position_tol) & (angles <= angle_tol_deg)
    return [db.templates[i] for i in np.flatnonzero(keep)]


def placement_offset(candidate_pose: Pose, template: Template, intr: CameraIntrinsics):
    """2D shift aligning the template's projected model origin with the candidate's."""
    tc, tt = candidate_pose.t, template.pose.t
    if tc[2] <= 0 or tt[2] <= 0:
        return None
    cand_px = np.array([intr.fx * tc[0] / tc[2] + intr.cx, intr.fy * tc[1] / tc[2] + intr.cy])
    tmpl_px = np.array([intr.fx * tt[0] / tt[2] + intr.cx, intr.fy * tt[1] / tt[2] + intr.cy])
    return cand_px - tmpl_px


def roi_extent(candidates, db: TemplateDatabase, margin: int, intr: CameraIntrinsics,
               position_tol: float = POSITION_TOL_DEFAULT,
               angle_tol_deg: float = ANGLE_TOL_DEFAULT):
    """Unclamped union of the selected templates' placed bounding boxes plus margin."""
    lo_x = lo_y = math.inf
    hi_x = hi_y = -math.inf
    any_template = False
    for cand in candidates:
        for t in select_templates(db, cand.pose, position_tol, angle_tol_deg):
            off = placement_offset(cand.pose, t, intr)
            if off is None:
                continue
            any_template = True
            lo_x = min(lo_x, t.bbox[0] + off[0])
            lo_y = min(lo_y, t.bbox[1] + off[1])
            hi_x = max(hi_x, t.bbox[2] + off[0])
            hi_y = max(hi_y, t.bbox[3] + off[1])
    if not any_template:
        raise NoTemplates("no template close to any candidate pose")
    return (int(math.floor(lo_x)) - margin, int(math.floor(lo_y)) - margin,
            int(math.ceil(hi_x)) + margin, int(math.ceil(hi_y)) + margin)


def compute_roi(candidates, db: TemplateDatabase, margin: int, intr: CameraIntrinsics,
                image_size, position_tol: float = POSITION_TOL_DEFAULT,
                angle_tol_deg: float = ANGLE_TOL_DEFAULT):
    """Union of the selected templates' bounding boxes at their candidate
    placements, inflated by ``margin`` and clamped to the image.

    Returns (x0, y0, x1, y1), half-open. Raises NoTemplates when no candidate
    has a template within tolerance.
    """
    iw, ih = image_size
    raw = roi_extent(candidates, db, margin, intr, position_tol, angle_tol_deg)
    return (max(raw[0], 0), max(raw[1], 0), min(raw[2], iw), min(raw[3], ih))


@dataclass
class MatchResult:
    template_id: int
    model_id: str
    cost: float  # template-selection cost, average px distance
    pose: Pose
    score: float = 0.0
    converged: bool = True
    refine_cost: float = math.nan
    blob_id: int = -1
    template: Template | None = field(default=None, repr=False)


def select_best(tensor: DirectionalTensor, candidates, db: TemplateDatabase,
                intr: CameraIntrinsics, position_tol: float = POSITION_TOL_DEFAULT,
                angle_tol_deg: float = ANGLE_TOL_DEFAULT) -> MatchResult:
    """Evaluate every in-tolerance template of every model for every candidate
    and keep the global minimum cost (ties broken by lower template id)."""
    if not candidates:
        raise ValueError("need at least one candidate")
    best = None
    best_key = None
    for cand in candidates:
        for t in select_templates(db, cand.pose, position_tol, angle_tol_deg):
            off = placement_offset(cand.pose, t, intr)
            if off is None:
                continue
            try:
                cost = fdcm_cost(tensor, t, off)
            except OutOfROI:
                continue
            key = (cost, t.template_id)
            if best_key is None or key < best_key:
                best_key = key
                best = MatchResult(
                    template_id=t.template_id, model_id=t.model_id, cost=cost,
                    pose=cand.pose, blob_id=cand.blob_id, template=t,
                )
    if best is None:
        raise NoTemplates("no template could be evaluated inside the ROI")
    return best


def _tensor_lookup(tensor: DirectionalTensor, arr: np.ndarray, xs, ys, thetas):
    """Bilinear in position within each point's quantized orientation channel.

    Image edges were drawn orientation-quantized, so reading a continuous
    orientation by blending adjacent channels would charge every mid-bin
    point a phantom lam*|theta - theta_bin| penalty; the optimizer would then
    chase bin-centre snaps instead of image edges. Quantizing the query the
    same way the edges were drawn cancels that artifact; orientation still
    steers the result through channel reassignment between iterations.
    """
    xl = np.clip(xs - tensor.x0, 0.0, tensor.width - 1.001)
    yl = np.clip(ys - tensor.y0, 0.0, tensor.height - 1.001)
    x0 = np.floor(xl).astype(int)
    y0 = np.floor(yl).astype(int)
    fx = xl - x0
    fy = yl - y0
    b = np.round(thetas / DELTA_THETA).astype(int) % ORIENTATION_BINS
    return (arr[b, y0, x0] * (1 - fx) * (1 - fy) + arr[b, y0, x0 + 1] * fx * (1 - fy)
            + arr[b, y0 + 1, x0] * (1 - fx) * fy + arr[b, y0 + 1, x0 + 1] * fx * fy)


def _projected_tangents(r: np.ndarray, t: np.ndarray, points3d, tangents3d, intr):
    cam = points3d @ r.T + t
    tan = tangents3d @ r.T
    z = cam[:, 2]
    du = intr.fx * (tan[:, 0] * z - cam[:, 0] * tan[:, 2]) / (z * z)
    dv = intr.fy * (tan[:, 1] * z - cam[:, 1] * tan[:, 2]) / (z * z)
    theta = np.mod(np.arctan2(dv, du), np.pi)
    u = intr.fx * cam[:, 0] / z + intr.cx
    v = intr.fy * cam[:, 1] / z + intr.cy
    return u, v, theta, z


def refine_pose(tensor: DirectionalTensor, match: MatchResult, intr: CameraIntrinsics,
                max_iter: int = 300) -> MatchResult:
    """Direct pose refinement on the smoothed tensor.

    Minimizes the sum of tensor lookups at the template's re-projected raster
    points over the 6 pose parameters, starting from the match's pose. The
    returned ``refine_cost`` (mean lookup) never exceeds the starting value;
    when the optimizer fails to converge the input pose is returned with
    ``converged=False``.
    """
    if tensor.smoothed is None:
        raise ValueError("tensor has no smoothed stage")
    template = match.template
    if template is None or len(template.points3d) == 0:
        raise ValueError("match carries no template raster geometry")
    pts3 = template.points3d
    tans3 = template.tangents3d

    def residuals(params):
        r = rotation_exp(params[:3])
        t = params[3:]
        u, v, theta, z = _projected_tangents(r, t, pts3, tans3, intr)
        vals = _tensor_lookup(tensor, tensor.smoothed, u, v, theta)
        vals = np.where(z <= 1e-6, 1e6, vals)
        return np.asarray(vals, dtype=float)

    x0 = np.concatenate([rotation_log(match.pose.r), match.pose.t])
    start_mean = float(np.mean(residuals(x0)))
    # Finite-difference step sized for float32 tensor lookups: microscopic
    # parameter steps would vanish below the tensor's value resolution. The
    # chamfer cost bottoms out at the edge-discretization floor, far from
    # zero, so the stopping rule must be relative.
    x, _, converged = levenberg_marquardt(residuals, x0, max_iter=max_iter,
                                          jac_eps=1e-4, improve_rel=1e-4)
    end_mean = float(np.mean(residuals(x)))
    if not converged:
        return MatchResult(match.template_id, match.model_id, match.cost, match.pose,
                           match.score, False, start_mean, match.blob_id, template)
    # The tensor resolves edges to roughly a pixel: a start already at that
    # floor gains nothing real from sliding along the cost's flat directions,
    # so keep it unless the descent was significant.
    if end_mean > start_mean - max(0.05 * start_mean, 0.05):
        x, end_mean = x0, start_mean
    pose = Pose(rotation_exp(x[:3]), x[3:])
    return MatchResult(match.template_id, match.model_id, match.cost, pose,
                       match.score, True, end_mean, match.blob_id, template)


GRADIENT_FLOOR = 1e-3


def score_pose(img: np.ndarray, template: Template, pose: Pose, intr: CameraIntrinsics) -> float:
    """Mean |cos| agreement between image gradient directions and the
    template's projected edge normals; in [0, 1].

    Points whose local gradient magnitude is below the floor contribute 0.
    Raises TooFewPoints when fewer than 10 raster points land in the image.
    """
    u, v, theta, z = _projected_tangents(pose.r, pose.t, template.points3d,
                                         template.tangents3d, intr)
    h, w = img.shape
    inside = (z > 0) & (u >= 1) & (u < w - 1) & (v >= 1) & (v < h - 1)
    n = int(inside.sum())
    if n < 10:
        raise TooFewPoints(f"only {n} raster points project inside the image")
    gx, gy = lines.sobel_gradients(img)
    xi = np.round(u[inside]).astype(int)
    yi = np.round(v[inside]).astype(int)
    gxv = gx[yi, xi]
    gyv = gy[yi, xi]
    mag = np.hypot(gxv, gyv)
    grad_dir = np.arctan2(gyv, gxv)
    normal_dir = theta[inside] + np.pi / 2
    contrib = np.where(mag < GRADIENT_FLOOR, 0.0, np.abs(np.cos(grad_dir - normal_dir)))
    return float(contrib.sum() / n)
