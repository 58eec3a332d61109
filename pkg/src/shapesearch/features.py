"""Per-view descriptors and view sets.

Two deterministic descriptor channels are provided: mean-pooled depth over a
square grid (channel A) and cell-wise histograms of depth-gradient
orientations (channel B). Externally computed descriptors can be imported from
a simple binary file. Every non-empty descriptor is unit L2 norm; an
all-background view keeps a zero vector so view sets stay aligned and
fixed-length (a zero vector has cosine 0 to everything, so it never wins a
match).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadGrid, DimensionMismatch, FormatError
from .render import DepthImage

DEFAULT_GRID = 8
DEFAULT_CELLS = 4
DEFAULT_BINS = 8

FEATURE_MAGIC = b"GIFTFT1\x00"


@dataclass(frozen=True)
class ViewDescriptor:
    values: np.ndarray  # (d,) float32, unit norm or all-zero
    channel: str

    @property
    def is_empty(self) -> bool:
        return not self.values.any()


@dataclass
class ViewSet:
    """Ordered per-channel view descriptors for one shape."""

    shape_id: str
    descriptors: dict[str, list[ViewDescriptor]] = field(default_factory=dict)

    @property
    def channels(self):
        return list(self.descriptors)

    @property
    def n_views(self) -> int:
        for views in self.descriptors.values():
            return len(views)
        return 0

    def add(self, channel: str, descriptor: ViewDescriptor) -> None:
        self.descriptors.setdefault(channel, []).append(descriptor)

    def matrix(self, channel: str) -> np.ndarray:
        """Stacked (n_views, d) float32 matrix for one channel."""
        views = self.descriptors[channel]
        if not views:
            raise DimensionMismatch(f"channel {channel!r} has no views")
        return np.stack([v.values for v in views])


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec.astype(np.float32)
    return (vec / norm).astype(np.float32)


def extract_grid_descriptor(image: DepthImage, grid: int = DEFAULT_GRID,
                            channel: str = "A") -> ViewDescriptor:
    """Mean-pool the depth image over a grid x grid partition, L2-normalized."""
    depth = np.asarray(image.depth, dtype=np.float64)
    side = depth.shape[0]
    if depth.shape[0] != depth.shape[1] or side % grid != 0:
        raise BadGrid(f"grid {grid} does not divide resolution {depth.shape}")
    cell = side // grid
    pooled = depth.reshape(grid, cell, grid, cell).mean(axis=(1, 3))
    return ViewDescriptor(values=_unit(pooled.ravel()), channel=channel)


def extract_gradient_descriptor(image: DepthImage, cells: int = DEFAULT_CELLS,
                                bins: int = DEFAULT_BINS,
                                channel: str = "B") -> ViewDescriptor:
    """Cell-wise orientation histogram of the depth gradient, L2-normalized.

    Gradients are central differences on the depth map; background pixels
    (depth exactly 0) are masked out of the accumulation.
    """
    depth = np.asarray(image.depth, dtype=np.float64)
    side = depth.shape[0]
    if depth.shape[0] != depth.shape[1] or side % cells != 0:
        raise BadGrid(f"cells {cells} does not divide resolution {depth.shape}")
    if bins < 4:
        raise ValueError("bins must be >= 4")

    gx = np.zeros_like(depth)
    gy = np.zeros_like(depth)
    gx[:, 1:-1] = (depth[:, 2:] - depth[:, :-2]) / 2.0
    gy[1:-1, :] = (depth[2:, :] - depth[:-2, :]) / 2.0
    mask = depth > 0
    magnitude = np.hypot(gx, gy) * mask
    orientation = np.arctan2(gy, gx)  # [-pi, pi]

    bin_idx = np.minimum(
        ((orientation + np.pi) / (2.0 * np.pi) * bins).astype(np.int64), bins - 1
    )
    cell_size = side // cells
    rows, cols = np.indices(depth.shape)
    cell_idx = (rows // cell_size) * cells + (cols // cell_size)
    flat_idx = cell_idx * bins + bin_idx
    hist = np.zeros(cells * cells * bins, dtype=np.float64)
    np.add.at(hist, flat_idx.ravel(), magnitude.ravel())
    return ViewDescriptor(values=_unit(hist), channel=channel)


def write_features(path, viewsets, channel: str) -> None:
    """Write view sets for one channel in the binary feature-file format.

    Layout (little-endian): magic, u32 shape count; per shape u16 id length +
    UTF-8 id, u32 n_views, u32 dim, then n_views*dim float32 row-major.
    """
    viewsets = list(viewsets)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", len(viewsets)))
        for vs in viewsets:
            mat = vs.matrix(channel).astype("<f4")
            ident = vs.shape_id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(mat.tobytes())


def import_features(path, channel: str) -> dict[str, ViewSet]:
    """Read a feature file; vectors are re-normalized to unit norm.

    All shapes must share the same view count and dimension.
    """
    data = open(path, "rb").read()
    if data[:8] != FEATURE_MAGIC:
        raise FormatError(f"bad magic in feature file {path}")
    offset = 8

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise FormatError(f"truncated feature file {path}")
        out = struct.unpack_from(fmt, data, offset)
        offset += size
        return out

    (count,) = take("<I")
    result: dict[str, ViewSet] = {}
    common = None
    for _ in range(count):
        (id_len,) = take("<H")
        if offset + id_len > len(data):
            raise FormatError(f"truncated feature file {path}")
        shape_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        n_views, dim = take("<II")
        if common is None:
            common = (n_views, dim)
        elif common != (n_views, dim):
            raise DimensionMismatch(
                f"shape {shape_id!r} has {n_views}x{dim}, expected {common[0]}x{common[1]}"
            )
        nbytes = n_views * dim * 4
        if offset + nbytes > len(data):
            raise FormatError(f"truncated feature file {path}")
        mat = np.frombuffer(data, dtype="<f4", count=n_views * dim, offset=offset)
        offset += nbytes
        mat = mat.reshape(n_views, dim).astype(np.float64)
        vs = ViewSet(shape_id=shape_id)
        for row in mat:
            vs.add(channel, ViewDescriptor(values=_unit(row), channel=channel))
        result[shape_id] = vs
    return result
