"""Lamp detection, identification and localization in greyscale images."""

from .chamfer import (
    DirectionalTensor,
    MatchResult,
    build_tensor,
    compute_roi,
    fdcm_cost,
    refine_pose,
    score_pose,
    select_best,
)
from .config import PipelineConfig
from .geometry import CameraIntrinsics, Pose, WeightedPose, average_pose, average_rotation, compose, invert, project
from .mesh import BulbInfo, LampModel, TriangleMesh
from .pipeline import StageCounters, detect_image, detect_video
from .registration import Template, TemplateDatabase, ViewpointGrid, build_template, register_model
from .registry import LampRegistry, ThermalZone, assign_zone, interpolate_pose, reproject_to_frame, to_world

__all__ = [
    "BulbInfo",
    "CameraIntrinsics",
    "DirectionalTensor",
    "LampModel",
    "LampRegistry",
    "MatchResult",
    "PipelineConfig",
    "Pose",
    "StageCounters",
    "Template",
    "TemplateDatabase",
    "ThermalZone",
    "TriangleMesh",
    "ViewpointGrid",
    "WeightedPose",
    "assign_zone",
    "average_pose",
    "average_rotation",
    "build_template",
    "build_tensor",
    "compose",
    "compute_roi",
    "detect_image",
    "detect_video",
    "fdcm_cost",
    "interpolate_pose",
    "invert",
    "project",
    "refine_pose",
    "register_model",
    "reproject_to_frame",
    "score_pose",
    "select_best",
    "to_world",
]
