"""Vocabulary training (k-means with k-means++ seeding) and the quantizer.

Training is fully deterministic for a fixed seed. Empty clusters are repaired
by stealing the point farthest from its centroid in the most populous cluster,
so the vocabulary always keeps exactly K entries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, FormatError

DEFAULT_K = 256
DEFAULT_MAX_ITERS = 50
CONVERGENCE_TOL = 1e-4


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (K, d) float32
    channel: str = ""
    seed: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n, k)."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(0, n)]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[i] = points[idx]
        np.minimum(closest, _sq_dists(points, centers[i : i + 1])[:, 0], out=closest)
    return centers


def train_codebook(features, k: int, seed: int = 0,
                   max_iters: int = DEFAULT_MAX_ITERS,
                   channel: str = "") -> Codebook:
    """Lloyd's k-means over the given vectors; duplicates are allowed when
    fewer than k vectors are supplied."""
    points = np.asarray(features, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise EmptyInput("no training vectors")
    n = points.shape[0]
    if n < k:
        reps = -(-k // n)  # duplicate inputs up to >= k points
        points = np.tile(points, (reps, 1))
        n = points.shape[0]

    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(points, k, rng)
    prev_cost = None
    for _ in range(max_iters):
        d2 = _sq_dists(points, centers)
        labels = d2.argmin(axis=1)
        cost = float(d2[np.arange(n), labels].sum())

        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            donor = int(counts.argmax())
            members = np.flatnonzero(labels == donor)
            steal = members[d2[members, donor].argmax()]
            labels[steal] = empty
            counts[donor] -= 1
            counts[empty] += 1

        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, labels, points)
        new_centers /= counts[:, None]
        centers = new_centers

        if prev_cost is not None:
            denom = max(prev_cost, 1e-300)
            if abs(prev_cost - cost) / denom < CONVERGENCE_TOL:
                break
        prev_cost = cost
    cb = Codebook(centroids=centers.astype(np.float32), channel=channel, seed=seed)
    if np.isnan(cb.centroids).any():
        raise EmptyInput("k-means produced NaN centroids")
    return cb


def quantize(codebook: Codebook, x, ma: int = 1) -> np.ndarray:
    """Indices of the ma nearest centroids, ascending by squared distance.

    Ties break toward the lower centroid index.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != codebook.dim:
        raise DimensionMismatch(f"vector dim {x.shape[0]} != codebook dim {codebook.dim}")
    if not 1 <= ma <= codebook.k:
        raise ValueError(f"ma must be in [1, {codebook.k}]")
    diffs = codebook.centroids.astype(np.float64) - x
    d2 = (diffs * diffs).sum(axis=1)
    order = np.argsort(d2, kind="stable")
    return order[:ma]


def save_codebook(codebook: Codebook, path) -> None:
    with open(path, "wb") as fh:
        channel = codebook.channel.encode("utf-8")
        fh.write(struct.pack("<IIqH", codebook.k, codebook.dim, codebook.seed, len(channel)))
        fh.write(channel)
        fh.write(codebook.centroids.astype("<f4").tobytes())


def load_codebook(path) -> Codebook:
    data = open(path, "rb").read()
    head = struct.calcsize("<IIqH")
    if len(data) < head:
        raise FormatError(f"truncated codebook file {path}")
    k, dim, seed, ch_len = struct.unpack_from("<IIqH", data, 0)
    channel = data[head : head + ch_len].decode("utf-8")
    body = np.frombuffer(data, dtype="<f4", count=k * dim, offset=head + ch_len)
    if body.size != k * dim:
        raise FormatError(f"truncated codebook file {path}")
    return Codebook(centroids=body.reshape(k, dim).copy(), channel=channel, seed=seed)
