"""Bright-blob candidate extraction from a greyscale image.

The threshold pair is picked from the image's normalized, smoothed histogram:
the lower threshold is the last bin still below the density floor ``b_upper``
(just under the saturation peak), and the upper threshold is the first bin at
or above it whose density derivative exceeds ``b_lower`` (the rising edge of
the peak). Binarizing at the upper threshold leaves outlines close to the
actual light surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NoThreshold
from .geom2d import convex_hull, line_intersection, rect_intersects

B_UPPER_DEFAULT = 1.0
B_LOWER_DEFAULT = 0.015
MERGE_GAP_DEFAULT = 8
SMOOTH_WINDOW = 11  # histogram moving-average width


@dataclass
class HistogramProfile:
    counts: np.ndarray  # (256,) raw bin counts
    normalized: np.ndarray  # (256,) counts * 256 / pixel count
    smoothed: np.ndarray  # (256,) moving average of normalized
    derivative: np.ndarray  # (256,) backward difference of smoothed
    t_low: int
    t_high: int


def _moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks at both ends of the range.

    Shrinking (rather than zero padding) matters near bin 255 where the lower
    threshold is decided: padding would fake low-density bins there.
    """
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(values)])
    n = len(values)
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def compute_thresholds(img: np.ndarray, b_upper: float = B_UPPER_DEFAULT,
                       b_lower: float = B_LOWER_DEFAULT) -> HistogramProfile:
    """Derive the double threshold from the image histogram.

    Raises NoThreshold when either threshold has no qualifying bin, which
    signals a frame that cannot contain a usable light blob (all dark, all
    bright, or no saturation peak).
    """
    img = np.asarray(img)
    if img.size == 0:
        raise ValueError("empty image")
    counts = np.bincount(img.reshape(-1), minlength=256).astype(np.int64)
    normalized = counts * 256.0 / img.size
    smoothed = _moving_average(normalized, SMOOTH_WINDOW)
    derivative = np.empty(256)
    derivative[0] = 0.0
    derivative[1:] = smoothed[1:] - smoothed[:-1]
    below = np.flatnonzero(smoothed < b_upper)
    if below.size == 0:
        raise NoThreshold("no histogram bin below the density floor")
    t_low = int(below[-1])
    rising = np.flatnonzero(derivative[t_low:] > b_lower)
    if rising.size == 0:
        raise NoThreshold("no derivative rise above the saturation floor")
    t_high = t_low + int(rising[0])
    return HistogramProfile(counts, normalized, smoothed, derivative, t_low, t_high)


@dataclass
class Blob:
    contour: np.ndarray  # (n, 2) closed pixel polyline
    hull: np.ndarray  # (h, 2) convex polygon
    area: float  # member pixel count, px^2
    centroid: np.ndarray  # (2,)


def box_filter(img: np.ndarray, size: int = 3) -> np.ndarray:
    return ndimage.uniform_filter(np.asarray(img, dtype=np.float32), size=size, mode="nearest")


# Neighbour ring, clockwise starting from west (image coords: x right, y down).
_RING = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]
# When the scan finds foreground at direction d (background at d-1), the new
# backtrack direction from the found pixel is _BACK[d] (= ring index of
# ring[d-1] - ring[d], always a valid ring step for adjacent directions).
_BACK = [6, 6, 0, 0, 2, 2, 4, 4]


def _trace_boundary(mask: np.ndarray, start):
    """Moore-neighbour border following with backtracking, clockwise.

    ``start`` is the first raster-order pixel of a connected component, so
    its west neighbour is guaranteed background. Returns (n, 2) x/y points.
    """
    h, w = mask.shape
    sy, sx = start
    p = (sx, sy)
    b = 0  # backtrack: west
    contour = [p]
    initial = (p, b)
    seen = set()
    while True:
        found = None
        for k in range(1, 9):
            d = (b + k) % 8
            nx, ny = p[0] + _RING[d][0], p[1] + _RING[d][1]
            if 0 <= nx < w and 0 <= ny < h and mask[ny, nx]:
                found = (d, nx, ny)
                break
        if found is None:
            return np.array(contour, dtype=np.int64)  # isolated pixel
        d, nx, ny = found
        p = (nx, ny)
        b = _BACK[d]
        state = (p, b)
        if state == initial or state in seen:
            return np.array(contour, dtype=np.int64)
        seen.add(state)
        contour.append(p)


def extract_contours(mask: np.ndarray):
    """Outer border of every 8-connected component, via border following.

    Returns a list of (contour points (n,2), component pixel count, centroid).
    """
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    out = []
    if count == 0:
        return out
    slices = ndimage.find_objects(labels)
    for li, sl in enumerate(slices, start=1):
        sub = labels[sl] == li
        ys, xs = np.nonzero(sub)
        order = np.lexsort((xs, ys))
        sy, sx = int(ys[order[0]]), int(xs[order[0]])
        contour = _trace_boundary(sub, (sy, sx))
        contour = contour + np.array([sl[1].start, sl[0].start])
        pixels = float(len(ys))
        centroid = np.array([xs.mean() + sl[1].start, ys.mean() + sl[0].start])
        out.append((contour, pixels, centroid))
    return out


def subpixel_quad(smoothed: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Refine a fitted quad to the half-height intensity crossings.

    The threshold mask recovers bright regions eroded by the box filter (a
    pixel qualifies only once its whole window is bright), so fitted corners
    sit 1-2 px inside the true surface edge. Sampling the smoothed intensity
    profile along each edge's outward normal and locating where it crosses
    halfway between the inside and outside plateaus removes that bias; under
    a symmetric kernel the half-height point is the true step position.
    Falls back to the input quad when a profile is unusable.
    """
    h, w = smoothed.shape
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    centroid = v.mean(axis=0)
    ts = np.arange(-3.0, 4.01, 0.25)
    lines_fit = []
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        edge = b - a
        length = np.hypot(*edge)
        if length < 6:
            return v
        normal = np.array([edge[1], -edge[0]]) / length
        if normal @ (a + edge / 2 - centroid) < 0:
            normal = -normal
        n_samples = int(min(max(length / 3, 7), 40))
        fracs = np.linspace(0.15, 0.85, n_samples)
        base = a[None, :] + fracs[:, None] * edge[None, :]
        pts = base[:, None, :] + ts[None, :, None] * normal[None, None, :]
        xs = np.clip(pts[..., 0], 0, w - 1.001)
        ys = np.clip(pts[..., 1], 0, h - 1.001)
        x0 = np.floor(xs).astype(int)
        y0 = np.floor(ys).astype(int)
        fx, fy = xs - x0, ys - y0
        prof = (smoothed[y0, x0] * (1 - fx) * (1 - fy) + smoothed[y0, x0 + 1] * fx * (1 - fy)
                + smoothed[y0 + 1, x0] * (1 - fx) * fy + smoothed[y0 + 1, x0 + 1] * fx * fy)
        corrected = []
        for k in range(n_samples):
            p = prof[k]
            inside = p[:4].mean()  # t in [-3, -2.25]
            outside = p[-4:].mean()  # t in [3.25, 4]
            if inside - outside < 20:
                continue
            half = 0.5 * (inside + outside)
            below = np.nonzero(p < half)[0]
            if below.size == 0 or below[0] == 0:
                continue
            j = below[0]
            t_star = ts[j - 1] + (ts[j] - ts[j - 1]) * (p[j - 1] - half) / (p[j - 1] - p[j])
            corrected.append(base[k] + t_star * normal)
        if len(corrected) < 3:
            return v
        pts = np.asarray(corrected)
        mean = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - mean)
        direction = vt[0]
        lines_fit.append((mean, direction))
    out = []
    for i in range(n):
        (m0, d0) = lines_fit[(i - 1) % n]
        (m1, d1) = lines_fit[i]
        inter = line_intersection(m0, m0 + d0, m1, m1 + d1)
        if inter is None:
            return v
        out.append(inter)
    return np.asarray(out)


def detect_blobs(img: np.ndarray, profile: HistogramProfile,
                 merge_gap: int = MERGE_GAP_DEFAULT, open_kernel: int = 3) -> list:
    """Candidate blobs: smooth, binarize at the upper threshold, open, trace
    contours and merge adjacent ones into convex hulls."""
    smoothed = box_filter(img)
    # Half-ULP guard: the float32 box filter may land a hair under an integer.
    mask = smoothed >= profile.t_high - 1e-3
    mask = ndimage.binary_opening(mask, structure=np.ones((open_kernel, open_kernel), dtype=bool))
    contours = extract_contours(mask)
    if not contours:
        return []
    boxes = []
    for contour, _, _ in contours:
        x0, y0 = contour.min(axis=0)
        x1, y1 = contour.max(axis=0)
        boxes.append((x0 - merge_gap, y0 - merge_gap, x1 + merge_gap, y1 + merge_gap))
    # Union-find over pairwise inflated-bbox intersections.
    parent = list(range(len(contours)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(contours)):
        for j in range(i + 1, len(contours)):
            if rect_intersects(boxes[i], boxes[j]):
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(len(contours)):
        groups.setdefault(find(i), []).append(i)
    blobs = []
    for members in groups.values():
        pts = np.vstack([contours[i][0] for i in members])
        hull = convex_hull(pts)
        area = sum(contours[i][1] for i in members)
        centroid = sum(contours[i][1] * contours[i][2] for i in members) / area
        if len(members) == 1:
            contour = contours[members[0]][0].astype(float)
        else:
            contour = hull.copy()
        blobs.append(Blob(contour=contour, hull=hull, area=area, centroid=centroid))
    blobs.sort(key=lambda b: (b.centroid[1], b.centroid[0]))
    return blobs
