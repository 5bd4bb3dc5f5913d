import math

import numpy as np

from lamplocate.geom2d import draw_segment
from lamplocate.lines import detect_segments, edge_map


def stroke_image(size, strokes, value=200, background=40):
    img = np.full((size[1], size[0]), background, dtype=float)
    for x0, y0, x1, y1 in strokes:
        draw_segment(img, x0, y0, x1, y1, value, thickness=2)
    return img.astype(np.uint8)


def test_blank_image_no_segments():
    img = np.full((80, 80), 70, dtype=np.uint8)
    assert detect_segments(img) == []


def test_recovers_drawn_strokes():
    strokes = [(10, 20, 90, 20), (30, 60, 30, 110), (50, 40, 100, 90)]
    img = stroke_image((120, 120), strokes)
    segs = detect_segments(img)
    # Each stroke is found as (at least) one segment close in angle and position.
    for x0, y0, x1, y1 in strokes:
        want_angle = math.atan2(y1 - y0, x1 - x0) % math.pi
        mid = np.array([(x0 + x1) / 2, (y0 + y1) / 2])
        hits = []
        for s in segs:
            da = abs(s.angle - want_angle) % math.pi
            da = min(da, math.pi - da)
            smid = np.array([(s.x0 + s.x1) / 2, (s.y0 + s.y1) / 2])
            if da < 0.12 and np.linalg.norm(smid - mid) < 12 and s.length > 20:
                hits.append(s)
        assert hits, f"stroke {(x0, y0, x1, y1)} not recovered"


def test_minimum_length_respected():
    img = stroke_image((80, 80), [(40, 40, 42, 42)])  # ~3 px
    segs = detect_segments(img, min_length=5.0)
    assert all(s.length >= 5.0 for s in segs)


def test_segment_angles_in_range():
    rng = np.random.default_rng(0)
    strokes = []
    for _ in range(6):
        x0, y0 = rng.uniform(10, 100, size=2)
        a = rng.uniform(0, 2 * math.pi)
        strokes.append((x0, y0, x0 + 30 * math.cos(a), y0 + 30 * math.sin(a)))
    img = stroke_image((140, 140), strokes)
    for s in detect_segments(img):
        assert 0.0 <= s.angle < math.pi


def test_edge_map_localizes_step():
    img = np.full((60, 60), 40, dtype=np.uint8)
    img[:, 30:] = 180
    mask, tangent = edge_map(img)
    ys, xs = np.nonzero(mask)
    assert xs.size > 0
    assert np.all(np.abs(xs - 29.5) <= 1.5)  # ridge at the step
    # Tangent of a vertical edge is vertical.
    t = tangent[ys, xs]
    d = np.minimum(np.abs(t - math.pi / 2), math.pi - np.abs(t - math.pi / 2))
    assert np.median(d) < 0.1


def test_hysteresis_drops_weak_isolated_edges():
    img = np.full((80, 80), 100, dtype=np.uint8)
    img[:, 40:] = 112  # weak step: below the strong threshold
    segs = detect_segments(img, high=100.0, low=50.0)
    assert segs == []
