"""Small 2D helpers: convex hulls, polygon areas, line intersections, rasterized lines."""

from __future__ import annotations

import numpy as np


def cross2(o, a, b) -> float:
    """z component of (a-o) x (b-o); positive for a counter-clockwise turn."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Strict convex hull (collinear points dropped), counter-clockwise, via monotone chain."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    uniq = sorted({(float(x), float(y)) for x, y in pts})
    if len(uniq) <= 2:
        return np.array(uniq, dtype=float).reshape(-1, 2)
    lower = []
    for p in uniq:
        while len(lower) > 1 and cross2(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(uniq):
        while len(upper) > 1 and cross2(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def polygon_area(vertices: np.ndarray) -> float:
    """Absolute shoelace area of a closed polygon given without the repeated endpoint."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def triangle_area(a, b, c) -> float:
    return 0.5 * abs(cross2(a, b, c))


def line_intersection(a1, a2, b1, b2):
    """Intersection of the infinite lines (a1,a2) and (b1,b2); None if parallel."""
    r = (a2[0] - a1[0], a2[1] - a1[1])
    s = (b2[0] - b1[0], b2[1] - b1[1])
    denom = r[0] * s[1] - r[1] * s[0]
    scale = max(abs(r[0]), abs(r[1]), abs(s[0]), abs(s[1]), 1.0)
    if abs(denom) < 1e-12 * scale * scale:
        return None
    t = ((b1[0] - a1[0]) * s[1] - (b1[1] - a1[1]) * s[0]) / denom
    return np.array([a1[0] + t * r[0], a1[1] + t * r[1]])


def point_line_distance(p, a, b) -> float:
    """Distance from ``p`` to the infinite line through ``a`` and ``b``."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    norm = np.hypot(dx, dy)
    if norm < 1e-12:
        return float(np.hypot(p[0] - a[0], p[1] - a[1]))
    return abs(dx * (p[1] - a[1]) - dy * (p[0] - a[0])) / norm


def point_in_convex_polygon(p, vertices: np.ndarray, tol: float = 1e-9) -> bool:
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    sign = 0
    for i in range(n):
        c = cross2(v[i], v[(i + 1) % n], p)
        if abs(c) <= tol:
            continue
        s = 1 if c > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def bresenham(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Integer pixel chain from (x0, y0) to (x1, y1), inclusive, shape (n, 2)."""
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    out = []
    x, y = x0, y0
    while True:
        out.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return np.array(out, dtype=np.int64)


def segment_angle(x0, y0, x1, y1) -> float:
    """Undirected segment orientation in [0, pi)."""
    ang = np.arctan2(y1 - y0, x1 - x0)
    if ang < 0:
        ang += np.pi
    if ang >= np.pi:
        ang -= np.pi
    return float(ang)


def rect_intersects(a, b) -> bool:
    """Axis-aligned rectangles given as (x0, y0, x1, y1), inclusive bounds."""
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def rect_union(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def fill_convex_polygon(image: np.ndarray, vertices: np.ndarray, value) -> None:
    """Paint a convex polygon (pixel coordinates) into ``image`` in place.

    A pixel is filled when its center lies inside the polygon; no anti-aliasing,
    so filled regions have hard intensity steps.
    """
    h, w = image.shape
    v = np.asarray(vertices, dtype=float)
    x0 = max(int(np.floor(v[:, 0].min())), 0)
    x1 = min(int(np.ceil(v[:, 0].max())), w - 1)
    y0 = max(int(np.floor(v[:, 1].min())), 0)
    y1 = min(int(np.ceil(v[:, 1].max())), h - 1)
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones(gx.shape, dtype=bool)
    pos = np.zeros(gx.shape, dtype=bool)
    neg = np.zeros(gx.shape, dtype=bool)
    n = len(v)
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        c = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        pos |= c > 1e-12
        neg |= c < -1e-12
    inside = ~(pos & neg)
    image[y0 : y1 + 1, x0 : x1 + 1][inside] = value


def draw_segment(image: np.ndarray, x0, y0, x1, y1, value, thickness: int = 1) -> None:
    """Draw a straight stroke into ``image`` in place (integer thickness)."""
    h, w = image.shape
    chain = bresenham(int(round(x0)), int(round(y0)), int(round(x1)), int(round(y1)))
    r = max(0, (thickness - 1) // 2)
    for ox in range(-r, thickness - r):
        for oy in range(-r, thickness - r):
            xs = chain[:, 0] + ox
            ys = chain[:, 1] + oy
            keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
            image[ys[keep], xs[keep]] = value
