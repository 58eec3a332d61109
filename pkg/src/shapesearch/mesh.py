"""Triangle mesh loading (OFF/OBJ) and translation/scale normalization.

Rotation is deliberately not normalized; a rotated mesh stays rotated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateMesh, EmptyMesh, ParseError

_AREA_EPS = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle soup in model space."""

    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int32
    id: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ParseError(f"triangle index out of range for mesh {self.id!r}")


def _fan_triangulate(indices):
    """Split a polygon's vertex-index list into a triangle fan."""
    return [(indices[0], indices[i], indices[i + 1]) for i in range(1, len(indices) - 1)]


def parse_off(text: str, shape_id: str = "") -> Mesh:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ParseError("empty OFF file")
    header = lines.pop(0)
    if not header.startswith("OFF"):
        raise ParseError("missing OFF header")
    rest = header[3:].strip()
    if rest:
        counts = rest.split()
    else:
        if not lines:
            raise ParseError("missing OFF counts line")
        counts = lines.pop(0).split()
    try:
        n_verts, n_faces = int(counts[0]), int(counts[1])
    except (IndexError, ValueError) as exc:
        raise ParseError("bad OFF counts line") from exc
    if len(lines) < n_verts + n_faces:
        raise ParseError("truncated OFF file")
    try:
        verts = np.array(
            [[float(x) for x in lines[i].split()[:3]] for i in range(n_verts)],
            dtype=np.float64,
        ).reshape(n_verts, 3)
    except ValueError as exc:
        raise ParseError("bad OFF vertex line") from exc
    tris = []
    for i in range(n_faces):
        fields = lines[n_verts + i].split()
        try:
            k = int(fields[0])
            poly = [int(x) for x in fields[1 : 1 + k]]
        except (IndexError, ValueError) as exc:
            raise ParseError("bad OFF face line") from exc
        if len(poly) != k or k < 3:
            raise ParseError("bad OFF face line")
        tris.extend(_fan_triangulate(poly))
    if not tris:
        raise EmptyMesh(f"no triangles in OFF data for {shape_id!r}")
    return Mesh(verts, np.array(tris, dtype=np.int32), id=shape_id)


def parse_obj(text: str, shape_id: str = "") -> Mesh:
    verts = []
    tris = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] == "v":
            try:
                verts.append([float(x) for x in fields[1:4]])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"bad vertex line: {line!r}") from exc
        elif fields[0] == "f":
            poly = []
            for item in fields[1:]:
                ref = item.split("/")[0]
                try:
                    idx = int(ref)
                except ValueError as exc:
                    raise ParseError(f"bad face line: {line!r}") from exc
                poly.append(idx - 1 if idx > 0 else len(verts) + idx)
            if len(poly) < 3:
                raise ParseError(f"bad face line: {line!r}")
            tris.extend(_fan_triangulate(poly))
        # all other record types (vt, vn, g, usemtl, ...) are ignored
    if not tris:
        raise EmptyMesh(f"no faces in OBJ data for {shape_id!r}")
    return Mesh(np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int32), id=shape_id)


def load_mesh(path, fmt: str | None = None) -> Mesh:
    """Load an ASCII OFF or OBJ mesh; format inferred from the extension."""
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").upper()
    fmt = fmt.upper()
    text = path.read_text(encoding="utf-8")
    shape_id = path.stem
    if fmt == "OFF":
        return parse_off(text, shape_id)
    if fmt == "OBJ":
        return parse_obj(text, shape_id)
    raise ParseError(f"unsupported mesh format {fmt!r}")


def surface_centroid(mesh: Mesh):
    """Area-weighted mean of triangle centroids, with the total area.

    Tessellation-density independent, unlike a plain vertex mean.
    """
    v = mesh.vertices
    t = mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= _AREA_EPS:
        return v.mean(axis=0), 0.0
    centroids = (a + b + c) / 3.0
    return (areas[:, None] * centroids).sum(axis=0) / total, float(total)


def normalize_pose(mesh: Mesh) -> Mesh:
    """Center the surface centroid at the origin and scale the maximum
    vertex distance from the origin to one.

    Zero-area meshes fall back to vertex statistics; only a mesh whose
    vertices all coincide is rejected.
    """
    if len(mesh.triangles) == 0:
        raise EmptyMesh(f"cannot normalize empty mesh {mesh.id!r}")
    centroid, _area = surface_centroid(mesh)
    shifted = mesh.vertices - centroid
    scale = float(np.linalg.norm(shifted, axis=1).max())
    if scale <= 0.0:
        raise DegenerateMesh(f"all vertices coincide in mesh {mesh.id!r}")
    return replace(mesh, vertices=shifted / scale)
