"""Virtual cameras on the unit sphere and an orthographic depth-buffer rasterizer.

Cameras follow a deterministic spherical Fibonacci lattice, so any view count
gives a reproducible, close-to-even placement. Rendering is orthographic over
the window [-1, 1]^2, which a pose-normalized mesh always fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh
from .mesh import Mesh

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# Depth value assigned to the far plane (z = -1). The near plane (z = +1) maps
# to 1.0 and background stays exactly 0, so surface pixels are always nonzero.
FAR_DEPTH = 0.05

DEFAULT_RESOLUTION = 64


@dataclass(frozen=True)
class Camera:
    """View direction given by azimuth and elevation angles, in radians."""

    azimuth: float
    elevation: float

    def direction(self) -> np.ndarray:
        """Unit vector from the origin toward the camera."""
        ce = math.cos(self.elevation)
        return np.array(
            [ce * math.cos(self.azimuth), ce * math.sin(self.azimuth), math.sin(self.elevation)]
        )


@dataclass(frozen=True)
class DepthImage:
    """Row-major depth grid in [0, 1]; row 0 is the top of the image."""

    depth: np.ndarray  # (h, w) float32

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


def camera_positions(n_views: int) -> list[Camera]:
    """Deterministic Fibonacci-lattice placement of cameras on the unit sphere."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    cameras = []
    for i in range(n_views):
        z = 1.0 - (2.0 * i + 1.0) / n_views
        elevation = math.asin(max(-1.0, min(1.0, z)))
        azimuth = (i * GOLDEN_ANGLE) % (2.0 * math.pi)
        cameras.append(Camera(azimuth=azimuth, elevation=elevation))
    return cameras


def camera_frame(camera: Camera):
    """Orthonormal (right, up, toward-camera) frame for a camera.

    The image up axis is the world +z direction projected into the image
    plane; at the poles the fallback up is world +x.
    """
    z_axis = camera.direction()
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(z_axis @ up)) > 1.0 - 1e-9:
        up = np.array([1.0, 0.0, 0.0])
    x_axis = np.cross(up, z_axis)
    x_axis = x_axis / np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    return x_axis, y_axis, z_axis


def render_depth(mesh: Mesh, camera: Camera, resolution: int = DEFAULT_RESOLUTION) -> DepthImage:
    """Render one orthographic depth view of a pose-normalized mesh.

    Nearer surface produces larger depth values; background is exactly 0.
    The z-buffer keeps the nearest surface per pixel.
    """
    if len(mesh.triangles) == 0:
        raise EmptyMesh(f"cannot render empty mesh {mesh.id!r}")
    if resolution < 16:
        raise ValueError("resolution must be >= 16")

    x_axis, y_axis, z_axis = camera_frame(camera)
    verts = mesh.vertices
    # Pixel centers: u = (x + 1) / 2 * res - 0.5, row 0 at the top (y = +1).
    half = resolution / 2.0
    u = (verts @ x_axis + 1.0) * half - 0.5
    r = (1.0 - verts @ y_axis) * half - 0.5
    z = np.clip(verts @ z_axis, -1.0, 1.0)
    depth_vals = FAR_DEPTH + (1.0 - FAR_DEPTH) * (z + 1.0) / 2.0

    zbuf = np.zeros((resolution, resolution), dtype=np.float64)
    tris = mesh.triangles
    tu = u[tris]  # (m, 3) projected corner columns
    tr = r[tris]
    td = depth_vals[tris]
    areas = (tu[:, 1] - tu[:, 0]) * (tr[:, 2] - tr[:, 0]) - (tu[:, 2] - tu[:, 0]) * (
        tr[:, 1] - tr[:, 0]
    )
    # Edge functions are affine in pixel coords: w_e = ea*c + eb*r + ec.
    nxt = [1, 2, 0]
    ea = tr - tr[:, nxt]
    eb = tu[:, nxt] - tu
    ec = tu * tr[:, nxt] - tu[:, nxt] * tr
    cmins = np.maximum(np.ceil(tu.min(axis=1)).astype(np.int64), 0)
    cmaxs = np.minimum(np.floor(tu.max(axis=1)).astype(np.int64), resolution - 1)
    rmins = np.maximum(np.ceil(tr.min(axis=1)).astype(np.int64), 0)
    rmaxs = np.minimum(np.floor(tr.max(axis=1)).astype(np.int64), resolution - 1)
    coords = np.arange(resolution, dtype=np.float64)

    for t in range(len(tris)):
        area = areas[t]
        if abs(area) < 1e-12 or cmins[t] > cmaxs[t] or rmins[t] > rmaxs[t]:
            continue
        cc = coords[cmins[t] : cmaxs[t] + 1]
        rr = coords[rmins[t] : rmaxs[t] + 1, None]
        # w[e] opposes vertex e: edge from vertex e+1 to e+2
        w0 = ea[t, 1] * cc + eb[t, 1] * rr + ec[t, 1]
        w1 = ea[t, 2] * cc + eb[t, 2] * rr + ec[t, 2]
        w2 = ea[t, 0] * cc + eb[t, 0] * rr + ec[t, 0]
        if area > 0:
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        else:
            inside = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
        if not inside.any():
            continue
        d = (w0 * td[t, 0] + w1 * td[t, 1] + w2 * td[t, 2]) / area
        window = zbuf[rmins[t] : rmaxs[t] + 1, cmins[t] : cmaxs[t] + 1]
        np.maximum(window, np.where(inside, d, 0.0), out=window)
    return DepthImage(depth=zbuf.astype(np.float32))


def save_pgm(image: DepthImage, path) -> None:
    """Write an 8-bit binary PGM for debugging (depth scaled by 255)."""
    data = np.rint(np.asarray(image.depth, dtype=np.float64) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
