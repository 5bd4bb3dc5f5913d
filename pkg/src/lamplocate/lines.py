"""Line segment extraction: Sobel gradients, hysteresis edges, orientation-coherent chaining."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MIN_SEGMENT_LEN = 5.0  # px
HYST_HIGH = 100.0  # Sobel magnitude after pre-smoothing (roughly 2x the intensity step)
HYST_LOW = 50.0
ANGLE_TOL = np.pi / 8  # tangent coherence while growing a region
RESIDUAL_TOL = 1.2  # px RMS perpendicular deviation for a straight region
PRESMOOTH_SIGMA = 1.0


@dataclass
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float
    angle: float  # [0, pi)

    @property
    def length(self) -> float:
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))


def sobel_gradients(img: np.ndarray, presmooth: float = PRESMOOTH_SIGMA):
    """Image gradients; a light Gaussian first, so hard staircase edges yield
    the macroscopic direction rather than per-step corner directions."""
    f = np.asarray(img, dtype=np.float32)
    if presmooth > 0:
        f = ndimage.gaussian_filter(f, sigma=presmooth, mode="nearest")
    gx = ndimage.sobel(f, axis=1, mode="nearest")
    gy = ndimage.sobel(f, axis=0, mode="nearest")
    return gx, gy


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep ridge pixels of the gradient magnitude along the gradient direction."""
    h, w = mag.shape
    angle = np.arctan2(gy, gx)  # gradient direction
    octant = np.round(angle / (np.pi / 4)).astype(int) % 4
    keep = np.zeros((h, w), dtype=bool)
    padded = np.pad(mag, 1, mode="constant")
    center = padded[1:-1, 1:-1]
    offsets = {0: ((0, 1), (0, -1)), 1: ((1, 1), (-1, -1)),
               2: ((1, 0), (-1, 0)), 3: ((1, -1), (-1, 1))}
    for o, ((dy1, dx1), (dy2, dx2)) in offsets.items():
        n1 = padded[1 + dy1 : h + 1 + dy1, 1 + dx1 : w + 1 + dx1]
        n2 = padded[1 + dy2 : h + 1 + dy2, 1 + dx2 : w + 1 + dx2]
        sel = octant == o
        keep |= sel & (center >= n1) & (center >= n2)
    return keep


def edge_map(img: np.ndarray, high: float = HYST_HIGH, low: float = HYST_LOW):
    """(edge mask, tangent angle map). Hysteresis: weak edges survive only when
    8-connected to a strong edge; edges are thinned to gradient-normal maxima."""
    gx, gy = sobel_gradients(img)
    mag = np.hypot(gx, gy)
    ridge = _nonmax_suppress(mag, gx, gy)
    weak = ridge & (mag >= low)
    strong = ridge & (mag >= high)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros_like(weak), np.zeros_like(mag)
    keep_labels = np.unique(labels[strong])
    keep_labels = keep_labels[keep_labels > 0]
    mask = np.isin(labels, keep_labels)
    tangent = np.mod(np.arctan2(gy, gx) + np.pi / 2, np.pi)
    return mask, tangent


def _angle_diff(a, b):
    d = np.abs(a - b) % np.pi
    return np.minimum(d, np.pi - d)


def _fit_segment(xs: np.ndarray, ys: np.ndarray):
    """PCA line fit of a pixel set -> (segment, rms perpendicular residual)."""
    pts = np.stack([xs, ys], axis=1).astype(float)
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, 1]
    proj = centered @ axis
    perp = centered @ evecs[:, 0]
    rms = float(np.sqrt(np.mean(perp**2)))
    a = mean + proj.min() * axis
    b = mean + proj.max() * axis
    ang = np.arctan2(b[1] - a[1], b[0] - a[0]) % np.pi
    return Segment(a[0], a[1], b[0], b[1], float(ang)), rms, proj


def detect_segments(img: np.ndarray, high: float = HYST_HIGH, low: float = HYST_LOW,
                    min_length: float = MIN_SEGMENT_LEN) -> list:
    """Straight segments of at least ``min_length`` px found in the image.

    Edge pixels are grown into regions of coherent tangent direction, each
    fitted with a line by PCA; regions that are not straight enough are split
    along the principal axis and refit.
    """
    mask, tangent = edge_map(img, high, low)
    h, w = mask.shape
    used = ~mask
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return []
    gx, gy = sobel_gradients(img)
    mag = np.hypot(gx, gy)
    order = np.lexsort((xs, ys, -mag[ys, xs]))  # strongest seeds first, stable
    segments: list = []
    neighbors = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    for oi in order:
        sy, sx = int(ys[oi]), int(xs[oi])
        if used[sy, sx]:
            continue
        ref = tangent[sy, sx]
        stack = [(sy, sx)]
        used[sy, sx] = True
        region = []
        while stack:
            cy, cx = stack.pop()
            region.append((cx, cy))
            for dy, dx in neighbors:
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < h and 0 <= nx < w and not used[ny, nx]:
                    if _angle_diff(tangent[ny, nx], ref) <= ANGLE_TOL:
                        used[ny, nx] = True
                        stack.append((ny, nx))
        region = np.array(region)
        _split_and_emit(region[:, 0], region[:, 1], segments, min_length, depth=0)
    segments.sort(key=lambda s: (s.y0, s.x0, s.y1, s.x1))
    return segments


def _split_and_emit(xs, ys, out: list, min_length: float, depth: int) -> None:
    if xs.size < 2:
        return
    seg, rms, proj = _fit_segment(xs, ys)
    if seg.length < min_length:
        return
    if rms <= RESIDUAL_TOL or depth >= 4:
        if rms <= RESIDUAL_TOL:
            out.append(seg)
        return
    median = np.median(proj)
    lower = proj <= median
    if lower.all() or not lower.any():
        return
    _split_and_emit(xs[lower], ys[lower], out, min_length, depth + 1)
    _split_and_emit(xs[~lower], ys[~lower], out, min_length, depth + 1)
