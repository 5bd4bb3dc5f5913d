"""Command line interface: register / detect / video / export / bench / synth.

Exit codes: 0 success, 1 input error, 2 no detections when --expect-detections
is set on ``detect``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from . import imageio
from .config import PipelineConfig
from .errors import LampLocateError
from .gbxml import build_lighting_systems, write_gbxml
from .geometry import CameraIntrinsics, pose_to_numbers
from .mesh import BulbInfo, LampModel, load_mesh
from .pipeline import detect_image, detect_video
from .registration import TemplateDatabase, ViewpointGrid, register_model
from .registry import LampRegistry, load_trajectory, load_zones
from .synthetic import default_lamp_models, render_synthetic, scene_looking_at_lamp


def _parse_intrinsics(text: str) -> CameraIntrinsics:
    fx, fy, cx, cy, w, h = (float(v) for v in text.split(","))
    return CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))


def _parse_surface(text: str) -> np.ndarray:
    corners = []
    for part in text.split(";"):
        corners.append([float(v) for v in part.split(",")])
    return np.array(corners, dtype=float)


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return PipelineConfig.load(args.config)
    return PipelineConfig()


def cmd_register(args) -> int:
    mesh = load_mesh(args.mesh)
    bulb = None
    if args.bulb:
        brand, series, w, lm, k = args.bulb.split("|")
        bulb = BulbInfo(brand, series, float(w), float(lm), float(k))
    model = LampModel(model_id=args.model_id, name=args.name or args.model_id,
                      mesh=mesh, light_surface=_parse_surface(args.light_surface),
                      bulb=bulb)
    intr = _parse_intrinsics(args.intrinsics)
    if args.append and Path(args.out).exists():
        db = TemplateDatabase.load(args.out)
    else:
        db = TemplateDatabase()
    db.intrinsics = intr
    grid = ViewpointGrid.hemisphere(
        azimuth_step_deg=args.azimuth_step,
        elevation_step_deg=args.elevation_step,
        distances=tuple(float(v) for v in args.distances.split(",")),
    )
    templates = register_model(model, grid, intr, sharpness=args.sharpness,
                               workers=args.workers)
    db.add_model(model, templates)
    db.save(args.out)
    print(f"registered {args.model_id}: {len(templates)} templates -> {args.out}")
    return 0


def _dump_masks(img, cfg, out_dir) -> None:
    from .blobs import box_filter, compute_thresholds

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    smoothed = box_filter(img)
    imageio.write_pgm(np.clip(smoothed, 0, 255).astype(np.uint8), out / "smoothed.pgm")
    profile = compute_thresholds(img, cfg.blob_b_upper, cfg.blob_b_lower)
    imageio.write_pgm(((img >= profile.t_low) * 255).astype(np.uint8), out / "mask_tl.pgm")
    imageio.write_pgm(((smoothed >= profile.t_high) * 255).astype(np.uint8), out / "mask_tu.pgm")


def _match_payload(match) -> dict:
    return {
        "model": match.model_id,
        "template": match.template_id,
        "pose": pose_to_numbers(match.pose),
        "cost": match.cost,
        "score": match.score,
        "converged": match.converged,
    }


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    img = imageio.read_grey(args.image)
    db = TemplateDatabase.load(args.db)
    if args.dump_masks:
        _dump_masks(img, cfg, args.dump_masks)
    matches = detect_image(img, db, cfg)
    if args.report == "json":
        print(json.dumps({"matches": [_match_payload(m) for m in matches]}, indent=2))
    else:
        for m in matches:
            pose = " ".join(f"{v:.4f}" for v in pose_to_numbers(m.pose))
            print(f"{m.model_id} score={m.score:.3f} cost={m.cost:.2f} pose: {pose}")
        if not matches:
            print("no detections")
    if args.expect_detections and not matches:
        return 2
    return 0


def cmd_video(args) -> int:
    cfg = _load_config(args)
    db = TemplateDatabase.load(args.db)
    trajectory = load_trajectory(args.trajectory)
    frame_paths = sorted(Path(args.frames).glob("*.pgm")) + sorted(Path(args.frames).glob("*.png"))
    if not frame_paths:
        print(f"no frames found in {args.frames}", file=sys.stderr)
        return 1

    def frames():
        for p in frame_paths:
            ts = float(p.stem.split("_")[-1])
            yield ts, imageio.read_grey(p)

    registry = detect_video(frames(), trajectory, db, cfg)
    registry.save(args.out)
    print(f"{len(registry.records)} lamp records -> {args.out}")
    return 0


def cmd_export(args) -> int:
    registry = LampRegistry.load(args.registry)
    zones = load_zones(args.zones)
    db = TemplateDatabase.load(args.db)
    entries, links, report = build_lighting_systems(registry, db.models, zones)
    write_gbxml(entries, links, args.out)
    msg = f"{len(entries)} lighting systems -> {args.out}"
    if report.record_ids:
        msg += f" ({len(report.record_ids)} records outside all zones)"
    print(msg)
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    img = imageio.read_grey(args.image)
    db = TemplateDatabase.load(args.db)
    modes = ["whole"] if args.whole_image else ["roi"]
    if args.parallel:
        modes.append("roi-parallel")
    print(benchmod.BenchReport.header())
    for mode in modes:
        report = benchmod.run_benchmark(img, db, cfg, mode=mode, runs=args.runs)
        print(report.row())
    return 0


def cmd_synth(args) -> int:
    models = {m.model_id: m for m in default_lamp_models()}
    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.sequence <= 1:
        scene = scene_looking_at_lamp(models[args.model], distance=args.distance,
                                      tilt_deg=args.tilt, azimuth_deg=args.azimuth,
                                      clutter_segments=args.clutter, seed=args.seed)
        img, truth = render_synthetic(scene, models)
        imageio.write_pgm(img, out_dir / "frame_0.pgm")
        payload = {"models": truth.model_ids,
                   "poses": [pose_to_numbers(p) for p in truth.object_poses]}
        (out_dir / "truth.json").write_text(json.dumps(payload, indent=2))
        print(f"1 frame -> {out_dir}")
        return 0
    from .geometry import invert
    from .registry import TrajectorySample, save_trajectory

    samples = []
    for k in range(args.sequence):
        az = args.azimuth + 3.0 * k
        scene = scene_looking_at_lamp(models[args.model], distance=args.distance,
                                      tilt_deg=args.tilt, azimuth_deg=az,
                                      clutter_segments=args.clutter, seed=args.seed + k)
        img, _ = render_synthetic(scene, models)
        ts = k / 10.0
        imageio.write_pgm(img, out_dir / f"frame_{ts:.6f}.pgm")
        samples.append(TrajectorySample(ts, invert(scene.camera)))
    save_trajectory(samples, out_dir / "trajectory.csv")
    print(f"{args.sequence} frames + trajectory -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lamp-locate",
                                     description="Lamp detection, localization and gbXML export")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="build templates for a lamp model")
    p.add_argument("--mesh", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--light-surface", required=True,
                   help="corner list 'x,y,z;x,y,z;...' in model metres")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="")
    p.add_argument("--bulb", default="", help="brand|series|watts|lumens|kelvin")
    p.add_argument("--intrinsics", default="850,850,400,300,800,600",
                   help="fx,fy,cx,cy,width,height")
    p.add_argument("--azimuth-step", type=float, default=20.0)
    p.add_argument("--elevation-step", type=float, default=20.0)
    p.add_argument("--distances", default="1.5,3,6,10")
    p.add_argument("--sharpness", type=float, default=0.92)
    p.add_argument("--append", action="store_true", help="add to an existing database")
    p.add_argument("--workers", type=int, default=None,
                   help="render viewpoints with this many worker processes")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("detect", help="detect lamps in a single image")
    p.add_argument("--image", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--config")
    p.add_argument("--dump-masks", help="write smoothed image and threshold masks here")
    p.add_argument("--report", choices=("text", "json"), default="text")
    p.add_argument("--expect-detections", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("video", help="detect across frames and fuse into a registry")
    p.add_argument("--frames", required=True, help="directory of frame_<timestamp>.pgm images")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_video)

    p = sub.add_parser("export", help="write gbXML lighting data from a registry")
    p.add_argument("--registry", required=True)
    p.add_argument("--zones", required=True)
    p.add_argument("--db", required=True, help="database supplying model metadata")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="tensor-construction timing, whole image vs ROIs")
    p.add_argument("--image", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--config")
    p.add_argument("--whole-image", action="store_true")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--runs", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="render synthetic test scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default="m1")
    p.add_argument("--distance", type=float, default=3.0)
    p.add_argument("--tilt", type=float, default=60.0)
    p.add_argument("--azimuth", type=float, default=20.0)
    p.add_argument("--clutter", type=int, default=0)
    p.add_argument("--sequence", type=int, default=1, help="emit N frames plus a trajectory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LampLocateError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
