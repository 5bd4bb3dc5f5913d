import json

import numpy as np
import pytest

from lamplocate.cli import main
from lamplocate.imageio import read_pgm, write_pgm
from lamplocate.mesh import save_stl_ascii
from lamplocate.registration import TemplateDatabase
from lamplocate.synthetic import default_lamp_models, render_synthetic, scene_looking_at_lamp


@pytest.fixture(scope="module")
def cli_db(tmp_path_factory):
    """Small database registered through the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    models = {m.model_id: m for m in default_lamp_models()}
    mesh_path = root / "m1.stl"
    save_stl_ascii(models["m1"].mesh, mesh_path)
    surface = ";".join(",".join(f"{v:g}" for v in c) for c in models["m1"].light_surface)
    db_path = root / "lamps.db"
    code = main([
        "register", "--mesh", str(mesh_path), "--model-id", "m1",
        f"--light-surface={surface}", "--out", str(db_path),
        "--name", "long twin-tube", "--bulb", "Osram|Lumilux|36|3350|4000",
        "--azimuth-step", "45", "--elevation-step", "30",
        "--distances", "2.6,3.4", "--intrinsics", "850,850,400,300,800,600",
    ])
    assert code == 0
    return root, db_path, models


def test_register_creates_database(cli_db):
    _, db_path, _ = cli_db
    db = TemplateDatabase.load(db_path)
    assert "m1" in db.models
    assert len(db.templates) > 0
    assert db.intrinsics.fx == 850


def test_detect_json_report(cli_db, tmp_path, capsys):
    root, db_path, models = cli_db
    scene = scene_looking_at_lamp(models["m1"], distance=3.0, tilt_deg=70,
                                  azimuth_deg=0, yaw_deg=0, seed=1)
    img, truth = render_synthetic(scene, models)
    img_path = tmp_path / "scene.pgm"
    write_pgm(img, img_path)
    code = main(["detect", "--image", str(img_path), "--db", str(db_path),
                 "--report", "json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["matches"]) == 1
    assert payload["matches"][0]["model"] == "m1"
    assert len(payload["matches"][0]["pose"]) == 12


def test_detect_expect_detections_exit_code(cli_db, tmp_path):
    _, db_path, _ = cli_db
    dark = np.full((600, 800), 15, dtype=np.uint8)
    img_path = tmp_path / "dark.pgm"
    write_pgm(dark, img_path)
    assert main(["detect", "--image", str(img_path), "--db", str(db_path)]) == 0
    assert main(["detect", "--image", str(img_path), "--db", str(db_path),
                 "--expect-detections"]) == 2


def test_detect_missing_file_exit_code(cli_db):
    _, db_path, _ = cli_db
    assert main(["detect", "--image", "/nonexistent.pgm", "--db", str(db_path)]) == 1


def test_dump_masks(cli_db, tmp_path):
    root, db_path, models = cli_db
    scene = scene_looking_at_lamp(models["m1"], distance=3.0, tilt_deg=80,
                                  azimuth_deg=10, yaw_deg=5, seed=2)
    img, _ = render_synthetic(scene, models)
    img_path = tmp_path / "scene.pgm"
    write_pgm(img, img_path)
    masks = tmp_path / "masks"
    assert main(["detect", "--image", str(img_path), "--db", str(db_path),
                 "--dump-masks", str(masks)]) == 0
    for name in ("smoothed.pgm", "mask_tl.pgm", "mask_tu.pgm"):
        m = read_pgm(masks / name)
        assert m.shape == img.shape
    tu = read_pgm(masks / "mask_tu.pgm")
    assert set(np.unique(tu)) <= {0, 255}
    assert (tu == 255).sum() > 0


def test_synth_sequence_video_export_round_trip(cli_db, tmp_path, capsys):
    root, db_path, _ = cli_db
    seq_dir = tmp_path / "seq"
    assert main(["synth", "--out", str(seq_dir), "--sequence", "5",
                 "--distance", "3.0", "--tilt", "75", "--seed", "4"]) == 0
    frames = sorted(seq_dir.glob("frame_*.pgm"))
    assert len(frames) == 5
    assert (seq_dir / "trajectory.csv").exists()

    registry_path = tmp_path / "registry.txt"
    assert main(["video", "--frames", str(seq_dir), "--trajectory",
                 str(seq_dir / "trajectory.csv"), "--db", str(db_path),
                 "--out", str(registry_path)]) == 0
    assert registry_path.exists()
    text = registry_path.read_text().strip()
    assert text, "registry should contain at least one record"
    assert len(text.splitlines()) == 1  # one static lamp -> one record

    zones_path = tmp_path / "zones.txt"
    lines = ["zone hall Main Hall"]
    for z in (-1.0, 1.0):
        for y in (-3.0, 3.0):
            for x in (-3.0, 3.0):
                lines.append(f"v {x} {y} {z}")
    faces = ["f 1 3 2", "f 2 3 4", "f 5 6 7", "f 6 8 7",
             "f 1 2 5", "f 2 6 5", "f 3 7 4", "f 4 7 8",
             "f 1 5 3", "f 3 5 7", "f 2 4 6", "f 4 8 6"]
    lines.extend(faces)
    zones_path.write_text("\n".join(lines) + "\n")

    xml_path = tmp_path / "out.xml"
    assert main(["export", "--registry", str(registry_path), "--zones", str(zones_path),
                 "--db", str(db_path), "--out", str(xml_path)]) == 0
    data = xml_path.read_bytes()
    assert b"LightingSystem" in data and b"NumberOfLamps" in data
    from lamplocate.gbxml import parse_gbxml

    entries, links = parse_gbxml(data)
    assert sum(e.number_of_lamps for e in entries) == 1
    assert entries[0].lamp.startswith("Osram Lumilux 36 W")


def test_bench_runs(cli_db, tmp_path, capsys):
    root, db_path, models = cli_db
    scene = scene_looking_at_lamp(models["m1"], distance=3.2, tilt_deg=75,
                                  azimuth_deg=5, yaw_deg=0, seed=9)
    img, _ = render_synthetic(scene, models)
    img_path = tmp_path / "bench.pgm"
    write_pgm(img, img_path)
    assert main(["bench", "--image", str(img_path), "--db", str(db_path),
                 "--runs", "1"]) == 0
    out = capsys.readouterr().out
    assert "TOTAL" in out and "roi" in out
