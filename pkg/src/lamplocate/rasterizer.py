"""Software depth rasterizer: perspective-correct triangle depth buffer at camera resolution."""

from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, Pose
from .mesh import TriangleMesh

DEPTH_BIAS_FRACTION = 1e-4


def rasterize_depth(mesh: TriangleMesh, pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Depth buffer (float32, +inf where uncovered) of the mesh under ``pose``.

    Depth is interpolated perspective-correctly (linear in 1/z over the
    projected triangle). Triangles with any vertex at z <= 0 are skipped;
    lamp registration keeps the whole model in front of the camera.
    """
    h, w = intr.height, intr.width
    depth = np.full((h, w), np.inf, dtype=np.float32)
    cam = pose.apply(mesh.vertices)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
    for tri in mesh.triangles:
        tz = z[tri]
        if np.any(tz <= 0):
            continue
        tu, tv = u[tri], v[tri]
        x0 = max(int(np.floor(tu.min())), 0)
        x1 = min(int(np.ceil(tu.max())), w - 1)
        y0 = max(int(np.floor(tv.min())), 0)
        y1 = min(int(np.ceil(tv.max())), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        area = (tu[1] - tu[0]) * (tv[2] - tv[0]) - (tv[1] - tv[0]) * (tu[2] - tu[0])
        if abs(area) < 1e-12:
            continue
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        w0 = ((tu[1] - gx) * (tv[2] - gy) - (tv[1] - gy) * (tu[2] - gx)) / area
        w1 = ((tu[2] - gx) * (tv[0] - gy) - (tv[2] - gy) * (tu[0] - gx)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        inv_z = w0 * (1.0 / tz[0]) + w1 * (1.0 / tz[1]) + w2 * (1.0 / tz[2])
        pix_z = np.where(inside & (inv_z > 0), 1.0 / inv_z, np.inf).astype(np.float32)
        patch = depth[y0 : y1 + 1, x0 : x1 + 1]
        np.minimum(patch, pix_z, out=patch)
    return depth


def depth_bias(depth: np.ndarray) -> float:
    """Self-occlusion tolerance: a fixed fraction of the buffer's depth range."""
    finite = depth[np.isfinite(depth)]
    if finite.size == 0:
        return DEPTH_BIAS_FRACTION
    span = float(finite.max() - finite.min())
    return DEPTH_BIAS_FRACTION * max(span, 1.0)
