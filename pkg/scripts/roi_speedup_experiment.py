#!/usr/bin/env python3
"""Whole-image vs ROI tensor timing on synthetic scenes.

Registers the two reference lamps, renders a handful of 800x600 scenes with
1-3 lamps each, and prints per-stage tensor times (edge / distance transform /
orientation recursion / integral images / smoothing) for the whole image, the
regions of interest, and the parallel ROI build.
"""

import argparse
import statistics

import numpy as np

from lamplocate.bench import BenchReport, find_rois, run_benchmark
from lamplocate.config import PipelineConfig
from lamplocate.geometry import Pose, look_at
from lamplocate.registration import TemplateDatabase, ViewpointGrid, register_model
from lamplocate.synthetic import (
    INTRINSICS_DEFAULT,
    LampPlacement,
    SyntheticScene,
    default_lamp_models,
    render_synthetic,
)

LAYOUTS = [
    [(0.0, 0.0)],
    [(0.0, 0.0), (2.4, 0.0)],
    [(-1.2, -0.8), (1.2, 0.8)],
    [(0.0, 0.0), (2.4, 0.2), (-2.2, -0.4)],
    [(-1.5, 0.0), (1.5, 0.0)],
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=5, help="timed runs per mode (plus one warm-up)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    models = {m.model_id: m for m in default_lamp_models()}
    grid = ViewpointGrid.hemisphere(azimuth_step_deg=30, elevation_step_deg=20,
                                    distances=tuple(np.arange(1.5, 8.4, 0.8)),
                                    min_elevation_deg=10)
    print("registering templates...")
    db = TemplateDatabase(intrinsics=INTRINSICS_DEFAULT)
    for model in models.values():
        db.add_model(model, register_model(model, grid, INTRINSICS_DEFAULT))
    print(f"  {len(db.templates)} templates\n")

    cfg = PipelineConfig()
    rng = np.random.default_rng(args.seed)
    whole_totals, roi_totals, par_totals = [], [], []
    print(BenchReport.header())
    for i, layout in enumerate(LAYOUTS):
        placements = [LampPlacement("m1", Pose(np.eye(3), [x, y, 0.0])) for x, y in layout]
        target = np.mean([[x, y, 0.0] for x, y in layout], axis=0)
        center = target + np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -6.5])
        camera = look_at(center, target, np.array([0.0, 0.0, 1.0]))
        scene = SyntheticScene(placements=placements, camera=camera,
                               clutter_segments=5, seed=700 + i)
        img, _ = render_synthetic(scene, models)
        camera_up = list(camera.r @ np.array([0.0, 0.0, 1.0]))
        n_rois = len(find_rois(img, db, cfg, camera_up))
        print(f"-- scene {i}: {len(layout)} lamps, {n_rois} ROIs")
        whole = run_benchmark(img, db, cfg, mode="whole", runs=args.runs)
        print(whole.row())
        roi = run_benchmark(img, db, cfg, mode="roi", runs=args.runs, camera_up=camera_up)
        print(roi.row())
        whole_totals.append(whole.total_ms)
        roi_totals.append(roi.total_ms)
        if n_rois >= 2:
            par = run_benchmark(img, db, cfg, mode="roi-parallel", runs=args.runs,
                                camera_up=camera_up)
            print(par.row())
            par_totals.append(par.par_ms)
    med_whole = statistics.median(whole_totals)
    med_roi = statistics.median(roi_totals)
    print(f"\nmedian whole {med_whole:.1f} ms  median roi {med_roi:.1f} ms "
          f"-> {100 * med_roi / med_whole:.1f}% of whole-image time")
    if par_totals:
        print(f"median parallel-roi wall {statistics.median(par_totals):.1f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
