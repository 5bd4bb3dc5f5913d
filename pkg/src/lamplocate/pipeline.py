"""End-to-end detection: blobs -> polygon fit -> PnP -> ROI chamfer matching.

Candidates are culled at the earliest possible stage; tensors are only ever
built for regions of interest that survive the polygon and pose filters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import blobs as blobmod
from . import chamfer
from .config import PipelineConfig
from .errors import (
    BehindCamera,
    EmptyROI,
    NoConvergence,
    NoTemplates,
    NoThreshold,
    OutOfRange,
    TooFewPoints,
)
from .geom2d import rect_intersects, rect_union
from .geometry import compose, invert
from .pnp import PoseCandidate, PoseFilterConfig, filter_pose, solve_pnp_hypotheses
from .polygon import fit_polygon
from .registration import TemplateDatabase
from .registry import LampRegistry, interpolate_pose, to_world

log = logging.getLogger(__name__)


@dataclass
class StageCounters:
    """Work accounting across one image, for early-exit verification."""

    blobs: int = 0
    polygons: int = 0
    candidates: int = 0
    rois: int = 0
    tensors_built: int = 0
    matches: int = 0


def _filter_config(cfg: PipelineConfig) -> PoseFilterConfig:
    return PoseFilterConfig(
        distance_min=cfg.filter_distance_min_m,
        distance_max=cfg.filter_distance_max_m,
        roll_limit_deg=cfg.filter_roll_deg,
        tilt_min_deg=cfg.filter_tilt_min_deg,
        tilt_max_deg=cfg.filter_tilt_max_deg,
    )


def extract_candidates(img: np.ndarray, db: TemplateDatabase, cfg: PipelineConfig,
                       camera_up=None, stats: StageCounters | None = None) -> list:
    """Blob detection through pose filtering; returns surviving PoseCandidates."""
    stats = stats if stats is not None else StageCounters()
    try:
        profile = blobmod.compute_thresholds(img, cfg.blob_b_upper, cfg.blob_b_lower)
    except NoThreshold:
        log.warning("no usable threshold for this frame; skipping")
        return []
    blobs = blobmod.detect_blobs(img, profile, cfg.blob_merge_gap, cfg.blob_open_kernel)
    stats.blobs += len(blobs)
    smoothed = blobmod.box_filter(img)
    fcfg = _filter_config(cfg)
    candidates = []
    for blob_id, blob in enumerate(blobs):
        try:
            fitted = fit_polygon(blob.hull, cfg.fit_k)
        except TooFewPoints:
            continue
        stats.polygons += 1
        corners = blobmod.subpixel_quad(smoothed, fitted.vertices)
        for model_id, entry in db.models.items():
            try:
                hypotheses = solve_pnp_hypotheses(corners, entry.light_surface,
                                                  db.intrinsics, blob_id=blob_id,
                                                  model_id=model_id)
            except (NoConvergence, BehindCamera):
                continue
            for cand in hypotheses:
                if cand.reproj_error > cfg.fit_max_reproj_px:
                    continue  # the model's rectangle cannot explain this quad
                keep, _ = filter_pose(cand, fcfg, camera_up)
                if keep:
                    candidates.append(cand)
    stats.candidates += len(candidates)
    return candidates


MIN_VISIBLE_ROI_FRACTION = 0.65


def candidate_rois(candidates: list, db: TemplateDatabase, cfg: PipelineConfig,
                   image_size, stats: StageCounters | None = None) -> list:
    """Per-candidate ROIs merged into disjoint rectangles.

    Candidates whose hypothesized region lies substantially outside the image
    (a partially visible lamp) are dropped: clipped templates produce
    meaningless costs. Returns a list of ((x0, y0, x1, y1), [candidates]).
    """
    stats = stats if stats is not None else StageCounters()
    regions = []
    for cand in candidates:
        try:
            raw = chamfer.roi_extent([cand], db, cfg.chamfer_roi_margin_px, db.intrinsics,
                                     cfg.chamfer_position_tol_m, cfg.chamfer_angle_tol_deg)
        except NoTemplates:
            continue
        x0 = max(raw[0], 0)
        y0 = max(raw[1], 0)
        x1 = min(raw[2], image_size[0])
        y1 = min(raw[3], image_size[1])
        if x1 <= x0 or y1 <= y0:
            continue
        raw_area = (raw[2] - raw[0]) * (raw[3] - raw[1])
        if (x1 - x0) * (y1 - y0) < MIN_VISIBLE_ROI_FRACTION * raw_area:
            continue
        regions.append(((x0, y0, x1, y1), [cand]))
    merged = True
    while merged:
        merged = False
        for i in range(len(regions)):
            for j in range(i + 1, len(regions)):
                if rect_intersects(regions[i][0], regions[j][0]):
                    rect = rect_union(regions[i][0], regions[j][0])
                    cands = regions[i][1] + regions[j][1]
                    regions[i] = (rect, cands)
                    del regions[j]
                    merged = True
                    break
            if merged:
                break
    stats.rois += len(regions)
    return regions


def detect_image(img: np.ndarray, db: TemplateDatabase, cfg: PipelineConfig | None = None,
                 camera_up=None, stats: StageCounters | None = None) -> list:
    """Full single-image pipeline; returns refined, scored MatchResults.

    Candidates rejected by any stage are dropped there and then; one match is
    produced per surviving region of interest.
    """
    cfg = cfg or PipelineConfig()
    stats = stats if stats is not None else StageCounters()
    if db.intrinsics is None:
        raise ValueError("template database carries no camera intrinsics")
    if camera_up is None:
        camera_up = cfg.camera_up_vector()
    candidates = extract_candidates(img, db, cfg, camera_up, stats)
    if not candidates:
        return []
    h, w = img.shape
    regions = candidate_rois(candidates, db, cfg, (w, h), stats)
    matches = []
    for rect, cands in regions:
        try:
            tensor = chamfer.build_tensor(img, rect, cfg.chamfer_lambda, smooth=True,
                                          edge_high=cfg.chamfer_edge_high,
                                          edge_low=cfg.chamfer_edge_low)
        except EmptyROI:
            continue
        stats.tensors_built += 1
        try:
            match = chamfer.select_best(tensor, cands, db, db.intrinsics,
                                        cfg.chamfer_position_tol_m, cfg.chamfer_angle_tol_deg)
        except NoTemplates:
            continue
        match = chamfer.refine_pose(tensor, match, db.intrinsics)
        try:
            score = chamfer.score_pose(img, match.template, match.pose, db.intrinsics)
        except TooFewPoints:
            continue
        match.score = score
        matches.append(match)
    stats.matches += len(matches)
    return matches


def detect_video(frames, trajectory, db: TemplateDatabase, cfg: PipelineConfig | None = None,
                 registry: LampRegistry | None = None) -> LampRegistry:
    """Run the image pipeline per frame and fuse detections in the world frame.

    ``frames`` yields (timestamp, image) pairs; frames outside the trajectory
    time span are skipped with a warning.
    """
    cfg = cfg or PipelineConfig()
    registry = registry if registry is not None else LampRegistry()
    omega_c = cfg.extrinsic_pose()
    world_up = np.array([0.0, 0.0, 1.0])
    for frame_idx, (timestamp, img) in enumerate(frames):
        try:
            omega_d = interpolate_pose(trajectory, timestamp)
        except OutOfRange:
            log.warning("frame %d at t=%s outside trajectory; skipped", frame_idx, timestamp)
            continue
        world_to_cam = invert(compose(omega_d, omega_c))
        camera_up = world_to_cam.r @ world_up
        matches = detect_image(img, db, cfg, camera_up=camera_up)
        for match in matches:
            omega_g = to_world(omega_d, omega_c, match.pose)
            registry.register_detection(omega_g, match.score, match.model_id,
                                        frame_idx, cfg.registry_merge_dist_m)
    return registry
