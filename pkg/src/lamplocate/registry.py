"""World-frame detection registry: trajectory interpolation, duplicate merging,
weighted pose fusion and thermal-zone assignment."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry, OutOfRange
from .geometry import (
    GeodesicSegment,
    Pose,
    WeightedPose,
    average_pose,
    compose,
    invert,
    pose_from_numbers,
    pose_to_numbers,
)

MERGE_DIST_DEFAULT = 0.6  # metres


@dataclass(frozen=True)
class TrajectorySample:
    timestamp: float  # seconds
    pose: Pose  # detector -> world


def load_trajectory(path) -> list:
    """CSV rows ``timestamp,r11..r33,tx,ty,tz`` with strictly increasing timestamps."""
    samples = []
    for raw in Path(path).read_text().splitlines():
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        vals = [float(v) for v in raw.split(",")]
        if len(vals) != 13:
            raise ValueError("trajectory rows need 13 comma-separated values")
        samples.append(TrajectorySample(vals[0], pose_from_numbers(vals[1:])))
    for a, b in zip(samples, samples[1:]):
        if b.timestamp <= a.timestamp:
            raise ValueError("trajectory timestamps must be strictly increasing")
    return samples


def save_trajectory(samples, path) -> None:
    lines = []
    for s in samples:
        nums = ",".join(f"{v:.9g}" for v in pose_to_numbers(s.pose))
        lines.append(f"{s.timestamp:.9g},{nums}")
    Path(path).write_text("\n".join(lines) + "\n")


def interpolate_pose(traj, t: float) -> Pose:
    """Detector pose at time ``t``: linear in translation, geodesic in rotation."""
    if not traj:
        raise OutOfRange("empty trajectory")
    times = [s.timestamp for s in traj]
    if t < times[0] or t > times[-1]:
        raise OutOfRange(f"timestamp {t} outside [{times[0]}, {times[-1]}]")
    i = bisect.bisect_left(times, t)
    if i < len(times) and times[i] == t:
        return traj[i].pose
    a, b = traj[i - 1], traj[i]
    u = (t - a.timestamp) / (b.timestamp - a.timestamp)
    return GeodesicSegment(a.pose, b.pose).at(u)


def to_world(omega_d: Pose, omega_c: Pose, omega_o: Pose) -> Pose:
    """Object pose in the world frame: detector pose, detector-camera extrinsic,
    object-camera pose, composed in that order."""
    return compose(omega_d, compose(omega_c, omega_o))


def reproject_to_frame(omega_g: Pose, omega_c: Pose, omega_d_j: Pose) -> Pose:
    """Object-camera pose that frame j would observe for a world-frame object."""
    return compose(invert(omega_c), compose(invert(omega_d_j), omega_g))


@dataclass
class DetectionRecord:
    record_id: int
    model_id: str
    detections: list = field(default_factory=list)  # (world pose, score, frame index)
    fused: Pose = field(default_factory=Pose.identity)
    zone_id: str | None = None

    def refuse(self) -> None:
        """Recompute the fused pose from the full member list (order independent)."""
        self.fused = average_pose([WeightedPose(p, w) for p, w, _ in self.detections])

    @property
    def scores(self):
        return [w for _, w, _ in self.detections]


class LampRegistry:
    """Single-writer registry of fused lamp detections."""

    def __init__(self):
        self.records: list = []

    def register_detection(self, omega_g: Pose, score: float, model_id: str,
                           frame: int, merge_dist: float = MERGE_DIST_DEFAULT) -> int:
        """Merge into the nearest same-model record within ``merge_dist``
        (Euclidean, fused translations), else start a new record. Returns the
        affected record id."""
        if score < 0:
            raise ValueError("score must be nonnegative")
        best = None
        best_d = math.inf
        for rec in self.records:
            if rec.model_id != model_id:
                continue
            d = float(np.linalg.norm(rec.fused.t - omega_g.t))
            if d < best_d:
                best_d = d
                best = rec
        if best is not None and best_d < merge_dist:
            best.detections.append((omega_g, score, frame))
            best.refuse()
            return best.record_id
        rec = DetectionRecord(record_id=len(self.records), model_id=model_id)
        rec.detections.append((omega_g, score, frame))
        rec.refuse()
        self.records.append(rec)
        return rec.record_id

    def save(self, path) -> None:
        """One record per line: model id, fused pose (12 numbers), detection
        count, mean score."""
        lines = []
        for rec in self.records:
            nums = " ".join(f"{v:.9g}" for v in pose_to_numbers(rec.fused))
            mean_score = sum(rec.scores) / len(rec.scores)
            lines.append(f"{rec.model_id} {nums} {len(rec.detections)} {mean_score:.9g}")
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @staticmethod
    def load(path) -> "LampRegistry":
        reg = LampRegistry()
        for raw in Path(path).read_text().splitlines():
            raw = raw.strip()
            if not raw:
                continue
            toks = raw.split()
            model_id = toks[0]
            pose = pose_from_numbers([float(v) for v in toks[1:13]])
            count = int(toks[13])
            mean_score = float(toks[14])
            rec = DetectionRecord(record_id=len(reg.records), model_id=model_id)
            rec.detections = [(pose, mean_score, -1)] * count
            rec.refuse()
            reg.records.append(rec)
        return reg


@dataclass
class ThermalZone:
    zone_id: str
    name: str
    vertices: np.ndarray  # (n, 3) metres, world frame
    triangles: np.ndarray  # (m, 3)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        edges: dict = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (int(min(a, b)), int(max(a, b)))
                edges[key] = edges.get(key, 0) + 1
        if any(c != 2 for c in edges.values()):
            raise ValueError(f"zone {self.zone_id} boundary is not watertight")


def load_zones(path) -> list:
    """Zone list file: ``zone <id> <name>`` headers followed by v/f mesh lines."""
    zones = []
    current = None
    verts: list = []
    tris: list = []

    def close():
        if current is not None:
            zones.append(ThermalZone(current[0], current[1], np.array(verts), np.array(tris)))

    for raw in Path(path).read_text().splitlines():
        toks = raw.split()
        if not toks:
            continue
        if toks[0] == "zone":
            close()
            current = (toks[1], " ".join(toks[2:]))
            verts, tris = [], []
        elif toks[0] == "v":
            verts.append([float(v) for v in toks[1:4]])
        elif toks[0] == "f":
            tris.append([int(v) - 1 for v in toks[1:4]])
    close()
    return zones


# Deterministic jitter directions for degenerate ray hits: small rotations of +x.
_JITTER = [
    (1.0, 0.0, 0.0),
    (1.0, 0.017, 0.031),
    (1.0, -0.029, 0.013),
    (1.0, 0.041, -0.023),
    (1.0, -0.019, -0.037),
    (1.0, 0.053, 0.007),
    (1.0, -0.047, 0.029),
    (1.0, 0.011, -0.051),
    (1.0, -0.037, -0.017),
]


def _ray_crossings(origin: np.ndarray, direction: np.ndarray, zone: ThermalZone):
    """Count ray-triangle crossings; returns None on a degenerate hit
    (edge/vertex graze or coplanar triangle) so the caller can re-jitter."""
    eps = 1e-9
    count = 0
    v = zone.vertices
    for tri in zone.triangles:
        a, b, c = v[tri[0]], v[tri[1]], v[tri[2]]
        e1, e2 = b - a, c - a
        pvec = np.cross(direction, e2)
        det = float(e1 @ pvec)
        if abs(det) < eps:
            # Parallel; degenerate only if the ray lies in the triangle plane nearby.
            n = np.cross(e1, e2)
            if abs(float((origin - a) @ n)) < eps * np.linalg.norm(n):
                return None
            continue
        inv = 1.0 / det
        tvec = origin - a
        u = float(tvec @ pvec) * inv
        if u < -eps or u > 1 + eps:
            continue
        qvec = np.cross(tvec, e1)
        w = float(direction @ qvec) * inv
        if w < -eps or u + w > 1 + eps:
            continue
        t = float(e2 @ qvec) * inv
        if t < -eps:
            continue  # intersection behind the ray origin
        if abs(t) < eps:
            return None  # origin on the boundary surface
        if u < eps or w < eps or u + w > 1 - eps:
            return None  # edge or vertex graze
        count += 1
    return count


def point_in_zone(point: np.ndarray, zone: ThermalZone) -> bool:
    """Ray-crossing parity from the point along +x, retrying on degenerate hits."""
    p = np.asarray(point, dtype=float)
    for d in _JITTER:
        direction = np.asarray(d) / np.linalg.norm(d)
        crossings = _ray_crossings(p, direction, zone)
        if crossings is not None:
            return crossings % 2 == 1
    raise DegenerateGeometry("all jittered rays hit zone edges or vertices")


def assign_zone(record: DetectionRecord, zones) -> str | None:
    """First zone whose volume contains the record's fused translation."""
    for zone in zones:
        if point_in_zone(record.fused.t, zone):
            record.zone_id = zone.zone_id
            return zone.zone_id
    record.zone_id = None
    return None
