"""Set-to-set view matching: exact Hausdorff forms and the first inverted file.

The exact similarity is the mean, over query views, of the best cosine match
in the target view set. The inverted file approximates it by only comparing a
query view against postings stored under its nearest codewords; cosines are
clamped at 0 so skipped pairs can only lower the score, never raise it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .codebook import Codebook, quantize
from .errors import DimensionMismatch, EmptySet, FormatError

DEFAULT_MA = 2


def _as_matrix(views) -> np.ndarray:
    mat = np.asarray(views, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise EmptySet("view set is empty")
    return mat


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"view dims differ: {a.shape[1]} vs {b.shape[1]}")


def clamped_cosines(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Cosine similarity matrix for unit-norm rows, clamped to [0, 1]."""
    return np.clip(queries @ targets.T, 0.0, 1.0)


def exact_hausdorff_distance(query_views, target_views, variant: str = "robust") -> float:
    """Exact Hausdorff distance between two view sets with d = 1 - cosine.

    ``standard`` takes the max over query views of the min distance;
    ``robust`` averages the min distances instead, damping isolated views.
    """
    q = _as_matrix(query_views)
    p = _as_matrix(target_views)
    _check_dims(q, p)
    mins = (1.0 - q @ p.T).min(axis=1)
    if variant == "standard":
        return float(mins.max())
    if variant == "robust":
        return float(mins.mean())
    raise ValueError(f"unknown variant {variant!r}")


def exact_similarity(query_views, target_views) -> float:
    """Mean over query views of the best clamped cosine in the target set."""
    q = _as_matrix(query_views)
    p = _as_matrix(target_views)
    _check_dims(q, p)
    return float(clamped_cosines(q, p).max(axis=1).mean())


@dataclass
class FirstInvertedFile:
    """Codeword-indexed postings of (shape ordinal, stored view feature).

    Built with single assignment: each non-empty view sits in exactly one
    entry, its nearest codeword. Multiple Assignment is a query-time knob.
    """

    codebook: Codebook
    shape_ids: list[str]
    n_views: int
    entry_ordinals: list[np.ndarray] = field(default_factory=list)  # (p,) int32 per entry
    entry_features: list[np.ndarray] = field(default_factory=list)  # (p, d) float32 per entry

    @property
    def k(self) -> int:
        return self.codebook.k

    @property
    def dim(self) -> int:
        return self.codebook.dim

    @property
    def n_shapes(self) -> int:
        return len(self.shape_ids)

    @property
    def total_postings(self) -> int:
        return sum(len(o) for o in self.entry_ordinals)

    def shape_matrix(self, ordinal: int) -> np.ndarray:
        """Stored view features of one shape, gathered back from the postings."""
        rows = [
            feats[ords == ordinal]
            for ords, feats in zip(self.entry_ordinals, self.entry_features)
            if (ords == ordinal).any()
        ]
        if not rows:
            raise EmptySet(f"shape ordinal {ordinal} has no stored views")
        return np.concatenate(rows, axis=0)


def build_fif(viewsets, codebook: Codebook, channel: str) -> FirstInvertedFile:
    """Store each non-empty view once, under its nearest codeword."""
    buckets_ord = [[] for _ in range(codebook.k)]
    buckets_feat = [[] for _ in range(codebook.k)]
    shape_ids = []
    n_views = 0
    for ordinal, vs in enumerate(viewsets):
        shape_ids.append(vs.shape_id)
        mat = vs.matrix(channel)
        if mat.shape[1] != codebook.dim:
            raise DimensionMismatch(
                f"shape {vs.shape_id!r} dim {mat.shape[1]} != codebook dim {codebook.dim}"
            )
        n_views = max(n_views, mat.shape[0])
        for row in mat:
            if not row.any():
                continue  # empty view, nothing to match
            entry = int(quantize(codebook, row, ma=1)[0])
            buckets_ord[entry].append(ordinal)
            buckets_feat[entry].append(row.astype(np.float32))
    fif = FirstInvertedFile(codebook=codebook, shape_ids=shape_ids, n_views=n_views)
    for ords, feats in zip(buckets_ord, buckets_feat):
        fif.entry_ordinals.append(np.asarray(ords, dtype=np.int32))
        if feats:
            fif.entry_features.append(np.stack(feats))
        else:
            fif.entry_features.append(np.zeros((0, codebook.dim), dtype=np.float32))
    return fif


def query_fif(fif: FirstInvertedFile, query_views, ma: int = DEFAULT_MA) -> np.ndarray:
    """Approximate similarity of the query view set against every shape.

    For each query view only the postings of its ma nearest entries are
    visited; per shape the running max cosine per view is kept, and the final
    score is the mean of those maxima over the query views. Shapes never
    visited score exactly 0.
    """
    q = _as_matrix(query_views)
    if q.shape[1] != fif.dim:
        raise DimensionMismatch(f"query dim {q.shape[1]} != index dim {fif.dim}")
    n = fif.n_shapes
    total = np.zeros(n, dtype=np.float64)
    for row in q:
        if not row.any():
            continue  # contributes 0 to the mean
        entries = quantize(fif.codebook, row, ma=ma)
        view_best = np.zeros(n, dtype=np.float64)
        for entry in entries:
            ords = fif.entry_ordinals[entry]
            if len(ords) == 0:
                continue
            sims = np.clip(fif.entry_features[entry] @ row, 0.0, 1.0)
            np.maximum.at(view_best, ords, sims)
        total += view_best
    return total / q.shape[0]


def save_fif(fif: FirstInvertedFile, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", fif.k, fif.dim, fif.n_views))
        fh.write(struct.pack("<I", fif.n_shapes))
        for sid in fif.shape_ids:
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for ords, feats in zip(fif.entry_ordinals, fif.entry_features):
            fh.write(struct.pack("<I", len(ords)))
            fh.write(ords.astype("<u4").tobytes())
            fh.write(feats.astype("<f4").tobytes())


def load_fif(path, codebook: Codebook) -> FirstInvertedFile:
    data = open(path, "rb").read()
    offset = 0

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise FormatError(f"truncated inverted file {path}")
        out = struct.unpack_from(fmt, data, offset)
        offset += size
        return out

    k, dim, n_views = take("<III")
    if k != codebook.k or dim != codebook.dim:
        raise DimensionMismatch(f"inverted file {path} does not match codebook")
    (n_shapes,) = take("<I")
    shape_ids = []
    for _ in range(n_shapes):
        (id_len,) = take("<H")
        shape_ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
    fif = FirstInvertedFile(codebook=codebook, shape_ids=shape_ids, n_views=n_views)
    for _ in range(k):
        (count,) = take("<I")
        ords = np.frombuffer(data, dtype="<u4", count=count, offset=offset)
        offset += count * 4
        feats = np.frombuffer(data, dtype="<f4", count=count * dim, offset=offset)
        offset += count * dim * 4
        if feats.size != count * dim or ords.size != count:
            raise FormatError(f"truncated inverted file {path}")
        fif.entry_ordinals.append(ords.astype(np.int32))
        fif.entry_features.append(feats.reshape(count, dim).copy())
    return fif
