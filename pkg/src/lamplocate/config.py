"""Pipeline configuration: one flat dataclass, serializable as key=value text."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .geometry import Pose, pose_from_numbers, pose_to_numbers


@dataclass
class PipelineConfig:
    # blob extraction
    blob_b_upper: float = 1.0
    blob_b_lower: float = 0.015
    blob_merge_gap: int = 8
    blob_open_kernel: int = 3
    # polygon fit
    fit_k: int = 4
    # candidates whose corner fit leaves more RMS reprojection error than this
    # cannot be the right model for the blob and are dropped early
    fit_max_reproj_px: float = 2.0
    # pose filters
    filter_distance_min_m: float = 0.5
    filter_distance_max_m: float = 12.0
    filter_roll_deg: float = 20.0
    filter_tilt_min_deg: float = 10.0
    filter_tilt_max_deg: float = 90.0
    # chamfer matching
    chamfer_lambda: float = 100.0
    chamfer_roi_margin_px: int = 12
    chamfer_position_tol_m: float = 0.4
    chamfer_angle_tol_deg: float = 25.0
    chamfer_edge_high: float = 200.0
    chamfer_edge_low: float = 100.0
    # registry fusion
    registry_merge_dist_m: float = 0.6
    # detector-to-camera extrinsic (12 numbers, row-major rotation + translation)
    camera_extrinsic: str = "1 0 0 0 1 0 0 0 1 0 0 0"
    # world up direction in camera coordinates for single-image runs;
    # empty string = orientation unknown, roll/tilt filters are skipped
    camera_up: str = ""

    def extrinsic_pose(self) -> Pose:
        return pose_from_numbers(float(v) for v in self.camera_extrinsic.split())

    def set_extrinsic(self, pose: Pose) -> None:
        self.camera_extrinsic = " ".join(f"{v:.9g}" for v in pose_to_numbers(pose))

    def camera_up_vector(self):
        if not self.camera_up.strip():
            return None
        vals = [float(v) for v in self.camera_up.split()]
        if len(vals) != 3:
            raise ValueError("camera_up needs 3 numbers")
        return vals

    def save(self, path) -> None:
        """Write flat ``section.key=value`` lines (module prefix before the dot)."""
        lines = [f"{_to_key(f.name)}={getattr(self, f.name)}" for f in fields(self)]
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def load(path) -> "PipelineConfig":
        cfg = PipelineConfig()
        types = {f.name: f.type for f in fields(cfg)}
        for raw in Path(path).read_text().splitlines():
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            key, _, value = raw.partition("=")
            name = _from_key(key.strip())
            if name not in types:
                raise ValueError(f"unknown config key: {key.strip()}")
            kind = types[name]
            if kind == "int":
                setattr(cfg, name, int(value.strip()))
            elif kind == "float":
                setattr(cfg, name, float(value.strip()))
            else:
                setattr(cfg, name, value.strip())
        return cfg


def _to_key(field_name: str) -> str:
    return field_name.replace("_", ".", 1)


def _from_key(key: str) -> str:
    return key.replace(".", "_", 1) if "." in key else key
