"""Triangle meshes, lamp model definitions and minimal CAD loaders (ASCII STL, OBJ)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with per-face unit normals computed from the winding."""

    vertices: np.ndarray  # (n, 3) metres
    triangles: np.ndarray  # (m, 3) vertex indices
    normals: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        n = np.cross(b - a, c - a)
        lens = np.linalg.norm(n, axis=1)
        if np.any(lens < 1e-12):
            raise ValueError("degenerate (zero-area) triangle in mesh")
        self.normals = n / lens[:, None]

    def edge_faces(self) -> dict:
        """Map sorted vertex-index pair -> list of adjacent face indices.

        Raises if any edge is shared by more than two faces (the mesh must be
        edge-manifold for the edges considered).
        """
        edges: dict = {}
        for fi, (i, j, k) in enumerate(self.triangles):
            for a, b in ((i, j), (j, k), (k, i)):
                key = (int(min(a, b)), int(max(a, b)))
                edges.setdefault(key, []).append(fi)
        for key, faces in edges.items():
            if len(faces) > 2:
                raise ValueError(f"edge {key} shared by {len(faces)} faces")
        return edges


@dataclass(frozen=True)
class BulbInfo:
    brand: str
    series: str
    power_w: float
    flux_lm: float
    color_k: float

    def describe(self) -> str:
        return (
            f"{self.brand} {self.series} {self.power_w:g} W, "
            f"{self.flux_lm:g} lm, {self.color_k:g} K"
        )


@dataclass
class LampModel:
    """A lamp: its mesh, the flat light-emitting polygon and bulb metadata."""

    model_id: str
    name: str
    mesh: TriangleMesh
    light_surface: np.ndarray  # (k, 3) ordered corners, metres, coplanar
    bulb: BulbInfo | None = None

    def __post_init__(self):
        self.light_surface = np.asarray(self.light_surface, dtype=float).reshape(-1, 3)
        if len(self.light_surface) < 3:
            raise ValueError("light surface needs at least 3 corners")
        # Coplanarity within 1 mm.
        c = self.light_surface - self.light_surface.mean(axis=0)
        _, s, _ = np.linalg.svd(c, full_matrices=False)
        if s[-1] > 1e-3:
            raise ValueError("light-surface corners are not coplanar within 1 mm")

    def surface_normal(self) -> np.ndarray:
        a, b, c = self.light_surface[:3]
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n)


def load_stl_ascii(path) -> TriangleMesh:
    """Read an ASCII STL file, welding identical vertices to recover shared edges."""
    verts: list = []
    index: dict = {}
    tris: list = []
    current: list = []
    for raw in Path(path).read_text().splitlines():
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] == "vertex":
            p = tuple(round(float(v), 9) for v in tokens[1:4])
            if p not in index:
                index[p] = len(verts)
                verts.append(p)
            current.append(index[p])
        elif tokens[0] == "endfacet":
            if len(current) != 3:
                raise ValueError("facet without exactly 3 vertices")
            tris.append(tuple(current))
            current = []
    if not tris:
        raise ValueError(f"no facets found in {path}")
    return TriangleMesh(np.array(verts, dtype=float), np.array(tris))


def save_stl_ascii(mesh: TriangleMesh, path, name: str = "lamp") -> None:
    lines = [f"solid {name}"]
    for fi, tri in enumerate(mesh.triangles):
        n = mesh.normals[fi]
        lines.append(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
        lines.append("    outer loop")
        for vi in tri:
            v = mesh.vertices[vi]
            lines.append(f"      vertex {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> TriangleMesh:
    """Read the v/f subset of an OBJ file; polygon faces are fan-triangulated."""
    verts: list = []
    tris: list = []
    for raw in Path(path).read_text().splitlines():
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] == "v":
            verts.append([float(v) for v in tokens[1:4]])
        elif tokens[0] == "f":
            idx = [int(tok.split("/")[0]) for tok in tokens[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for a, b in zip(idx[1:-1], idx[2:]):
                tris.append((idx[0], a, b))
    if not tris:
        raise ValueError(f"no faces found in {path}")
    return TriangleMesh(np.array(verts, dtype=float), np.array(tris))


def load_mesh(path) -> TriangleMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".stl":
        return load_stl_ascii(path)
    if suffix == ".obj":
        return load_obj(path)
    raise ValueError(f"unsupported mesh format: {suffix}")
