"""Tensor-construction benchmark: whole image versus regions of interest.

Reports per-stage milliseconds in the order edge extraction / distance
transform / orientation recursion / integral images / smoothing, plus the
total and, for the parallel ROI mode, the wall-clock of building all ROI
tensors concurrently in worker processes.
"""

from __future__ import annotations

import multiprocessing as mp
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import chamfer
from .config import PipelineConfig
from .errors import NoROI
from .pipeline import candidate_rois, extract_candidates
from .registration import TemplateDatabase

MODES = ("whole", "roi", "roi-parallel")


@dataclass
class BenchReport:
    mode: str
    edge_ms: float
    dist_ms: float
    rec_ms: float
    integ_ms: float
    smooth_ms: float
    total_ms: float
    par_ms: float | None
    n_rois: int
    runs: int

    def row(self) -> str:
        par = f"{self.par_ms:.2f}" if self.par_ms is not None else "-"
        return (f"{self.mode:<13s} {self.edge_ms:>9.2f} {self.dist_ms:>9.2f} "
                f"{self.rec_ms:>9.2f} {self.integ_ms:>9.2f} {self.smooth_ms:>9.2f} "
                f"{self.total_ms:>9.2f} {par:>9s}")

    @staticmethod
    def header() -> str:
        return (f"{'mode':<13s} {'Edge':>9s} {'Dist':>9s} {'Rec':>9s} "
                f"{'Integ':>9s} {'Smth':>9s} {'TOTAL':>9s} {'PAR':>9s}")


def _build_subimage(args):
    sub, lam, high, low = args
    t = chamfer.build_tensor(sub, (0, 0, sub.shape[1], sub.shape[0]), lam,
                             smooth=True, edge_high=high, edge_low=low)
    return t.timings


def _stage_medians(samples) -> dict:
    keys = ("edge_ms", "dist_ms", "rec_ms", "integ_ms", "smooth_ms")
    med = {k: statistics.median(getattr(s, k) for s in samples) for k in keys}
    med["total_ms"] = statistics.median(s.total_ms for s in samples)
    return med


def find_rois(img: np.ndarray, db: TemplateDatabase, cfg: PipelineConfig, camera_up=None):
    """Candidate extraction only; returns the ROI rectangles (not timed as a stage)."""
    candidates = extract_candidates(img, db, cfg, camera_up)
    h, w = img.shape
    return [rect for rect, _ in candidate_rois(candidates, db, cfg, (w, h))]


def run_benchmark(img: np.ndarray, db: TemplateDatabase, cfg: PipelineConfig | None = None,
                  mode: str = "roi", runs: int = 5, camera_up=None) -> BenchReport:
    """Tensor build times for one image, median over ``runs`` (one extra warm-up
    run is discarded). ROI modes raise NoROI when nothing survives the filters."""
    cfg = cfg or PipelineConfig()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    h, w = img.shape
    lam, high, low = cfg.chamfer_lambda, cfg.chamfer_edge_high, cfg.chamfer_edge_low
    if mode == "whole":
        samples = []
        for _ in range(runs + 1):
            t = chamfer.build_tensor(img, (0, 0, w, h), lam, smooth=True,
                                     edge_high=high, edge_low=low)
            samples.append(t.timings)
        med = _stage_medians(samples[1:])
        return BenchReport(mode=mode, par_ms=None, n_rois=0, runs=runs, **med)

    rois = find_rois(img, db, cfg, camera_up)
    if not rois:
        raise NoROI("image produced no regions of interest")
    subs = [(np.ascontiguousarray(img[y0:y1, x0:x1]), lam, high, low)
            for x0, y0, x1, y1 in rois]
    if mode == "roi":
        samples = []
        for _ in range(runs + 1):
            acc = chamfer.StageTimes()
            for sub in subs:
                acc.add(_build_subimage(sub))
            samples.append(acc)
        med = _stage_medians(samples[1:])
        return BenchReport(mode=mode, par_ms=None, n_rois=len(rois), runs=runs, **med)

    ctx = mp.get_context("fork")
    with ctx.Pool(processes=min(len(subs), mp.cpu_count())) as pool:
        par_times = []
        stage_samples = []
        for _ in range(runs + 1):
            t0 = time.perf_counter()
            timings = pool.map(_build_subimage, subs)
            par_times.append((time.perf_counter() - t0) * 1e3)
            acc = chamfer.StageTimes()
            for t in timings:
                acc.add(t)
            stage_samples.append(acc)
    med = _stage_medians(stage_samples[1:])
    return BenchReport(mode=mode, par_ms=statistics.median(par_times[1:]),
                       n_rois=len(rois), runs=runs, **med)
