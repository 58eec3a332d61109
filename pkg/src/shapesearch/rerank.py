"""Contextual re-ranking: sparse neighbor activations, augmentation,
generalized-mean aggregation, and the second inverted file.

An activation encodes a shape's top-k1 neighbors with their match scores as
membership grades. Fuzzy Jaccard over two activations is the re-ranked
similarity; the second inverted file is the transpose of all database
activations, so a query only touches the entries of its own support.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

DEFAULT_K1 = 10
DEFAULT_K2 = 4
DEFAULT_ALPHA = 0.5


def _seq_sum(values) -> float:
    # Sequential, ascending-coordinate summation: the second inverted file
    # accumulates mins one coordinate at a time in the same order, which keeps
    # a self-query's accumulator bit-equal to the cached norm.
    total = 0.0
    for v in values:
        total += float(v)
    return total


@dataclass(frozen=True)
class SparseActivation:
    """Sparse membership vector over database shape ordinals."""

    owner: str
    indices: np.ndarray  # (s,) int64, strictly ascending
    values: np.ndarray   # (s,) float64, positive
    norm: float          # cached L1 norm

    @property
    def support(self) -> int:
        return len(self.indices)

    def items(self):
        return zip(self.indices.tolist(), self.values.tolist())


def make_activation(owner: str, indices, values) -> SparseActivation:
    indices = np.asarray(indices, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(indices, kind="stable")
    indices = indices[order]
    values = values[order]
    keep = values > 0.0
    indices = indices[keep]
    values = values[keep]
    return SparseActivation(owner=owner, indices=indices, values=values,
                            norm=_seq_sum(values))


def build_activation(scores, k1: int, owner: str = "") -> SparseActivation:
    """Keep the top-k1 shapes by score as membership grades.

    Ties at the cutoff keep the lower shape ordinal; zero scores never enter
    the support.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if k1 < 1:
        raise ValueError("k1 must be >= 1")
    n = len(scores)
    order = np.lexsort((np.arange(n), -scores))[: min(k1, n)]
    return make_activation(owner, order, scores[order])


def top_neighbors(scores, k2: int) -> list[int]:
    """Ordinals of the top-k2 positive-score shapes, best first.

    Ties break toward the lower ordinal. Used for augmentation neighborhoods;
    when the scored shape is itself in the database its own score is maximal,
    so the neighborhood includes it.
    """
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(len(scores)), -scores))[: min(k2, len(scores))]
    return [int(i) for i in order if scores[i] > 0.0]


def mean_activation(owner: str, activations, neighbor_list) -> SparseActivation:
    if not neighbor_list:
        return make_activation(owner, [], [])
    acc: dict[int, float] = {}
    for i in neighbor_list:
        act = activations[i]
        for idx, val in act.items():
            acc[idx] = acc.get(idx, 0.0) + val
    count = float(len(neighbor_list))
    items = sorted(acc.items())
    return make_activation(owner, [i for i, _ in items], [v / count for _, v in items])


def neighbor_augment(activations, neighbor_lists) -> list[SparseActivation]:
    """Replace each activation by the mean over its neighborhood.

    All updates read the pre-update activations (all-at-once semantics).
    """
    return [
        mean_activation(act.owner, activations, neighbor_lists[q])
        for q, act in enumerate(activations)
    ]


def co_augment(acts1, acts2, neighbors1, neighbors2):
    """Cross-channel augmentation: channel 1 activations are averaged over
    channel-2 neighborhoods and vice versa, simultaneously."""
    out1 = [
        mean_activation(act.owner, acts1, neighbors2[q])
        for q, act in enumerate(acts1)
    ]
    out2 = [
        mean_activation(act.owner, acts2, neighbors1[q])
        for q, act in enumerate(acts2)
    ]
    return out1, out2


def aggregate(f1: SparseActivation, f2: SparseActivation,
              alpha: float = DEFAULT_ALPHA) -> SparseActivation:
    """Element-wise generalized mean with exponent alpha over the union support.

    Equal inputs pass through untouched, so aggregation of identical
    activations is exact.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be > 0")
    union = np.union1d(f1.indices, f2.indices)
    v1 = np.zeros(len(union))
    v2 = np.zeros(len(union))
    v1[np.searchsorted(union, f1.indices)] = f1.values
    v2[np.searchsorted(union, f2.indices)] = f2.values
    out = np.where(
        v1 == v2,
        v1,
        ((np.power(v1, alpha) + np.power(v2, alpha)) / 2.0) ** (1.0 / alpha),
    )
    return make_activation(f1.owner, union, out)


def jaccard_dense(fq: SparseActivation, fp: SparseActivation) -> float:
    """Fuzzy Jaccard: sum of mins over sum of maxes across all coordinates.

    Both activations empty gives 0 (empty context carries no evidence).
    """
    if fq.support == 0 and fp.support == 0:
        return 0.0
    common, qi, pi = np.intersect1d(fq.indices, fp.indices, return_indices=True)
    sum_min = _seq_sum(np.minimum(fq.values[qi], fp.values[pi]))
    sum_max = fq.norm + fp.norm - sum_min
    if sum_max <= 0.0:
        return 0.0
    return sum_min / sum_max


@dataclass
class SecondInvertedFile:
    """Transpose of all database activations plus cached L1 norms.

    Entry i lists (shape ordinal j, F_j[i]) for every activation with a
    nonzero coordinate i; there is exactly one entry per database shape.
    """

    shape_ids: list[str]
    norms: np.ndarray  # (N,) float64
    entry_ordinals: list[np.ndarray]  # (p,) int32 per entry
    entry_values: list[np.ndarray]    # (p,) float64 per entry

    @property
    def n_shapes(self) -> int:
        return len(self.shape_ids)

    @property
    def total_postings(self) -> int:
        return sum(len(o) for o in self.entry_ordinals)


def build_sif(activations, shape_ids=None) -> SecondInvertedFile:
    """Build the transpose index from finalized database activations."""
    activations = list(activations)
    n = len(activations)
    if shape_ids is None:
        shape_ids = [a.owner for a in activations]
    buckets: list[list] = [[] for _ in range(n)]
    for j, act in enumerate(activations):
        for idx, val in act.items():
            if not 0 <= idx < n:
                raise ValueError(f"activation coordinate {idx} outside database of {n}")
            buckets[idx].append((j, val))
    sif = SecondInvertedFile(
        shape_ids=list(shape_ids),
        norms=np.array([a.norm for a in activations], dtype=np.float64),
        entry_ordinals=[],
        entry_values=[],
    )
    for bucket in buckets:
        sif.entry_ordinals.append(np.array([j for j, _ in bucket], dtype=np.int32))
        sif.entry_values.append(np.array([v for _, v in bucket], dtype=np.float64))
    return sif


def query_sif(sif: SecondInvertedFile, fq: SparseActivation) -> np.ndarray:
    """Fuzzy Jaccard of the query activation against every database shape.

    Only the entries of the query's support are visited; untouched shapes
    score exactly 0.
    """
    n = sif.n_shapes
    acc = np.zeros(n, dtype=np.float64)
    for idx, val in fq.items():
        if idx >= n:
            continue
        ords = sif.entry_ordinals[idx]
        if len(ords) == 0:
            continue
        acc[ords] += np.minimum(val, sif.entry_values[idx])
    scores = np.zeros(n, dtype=np.float64)
    touched = acc > 0.0
    denom = fq.norm + sif.norms[touched] - acc[touched]
    scores[touched] = acc[touched] / denom
    return scores


def save_sif(sif: SecondInvertedFile, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", sif.n_shapes))
        for sid in sif.shape_ids:
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(sif.norms.astype("<f8").tobytes())
        for ords, vals in zip(sif.entry_ordinals, sif.entry_values):
            fh.write(struct.pack("<I", len(ords)))
            fh.write(ords.astype("<u4").tobytes())
            fh.write(vals.astype("<f8").tobytes())


def load_sif(path) -> SecondInvertedFile:
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

    (n,) = take("<I")
    shape_ids = []
    for _ in range(n):
        (id_len,) = take("<H")
        shape_ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
    norms = np.frombuffer(data, dtype="<f8", count=n, offset=offset).copy()
    offset += n * 8
    sif = SecondInvertedFile(shape_ids=shape_ids, norms=norms,
                             entry_ordinals=[], entry_values=[])
    for _ in range(n):
        (count,) = take("<I")
        ords = np.frombuffer(data, dtype="<u4", count=count, offset=offset)
        offset += count * 4
        vals = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        if ords.size != count or vals.size != count:
            raise FormatError(f"truncated inverted file {path}")
        sif.entry_ordinals.append(ords.astype(np.int32))
        sif.entry_values.append(vals.copy())
    return sif


def save_activations(activations, path) -> None:
    with open(path, "wb") as fh:
        activations = list(activations)
        fh.write(struct.pack("<I", len(activations)))
        for act in activations:
            raw = act.owner.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", act.support))
            fh.write(act.indices.astype("<u4").tobytes())
            fh.write(act.values.astype("<f8").tobytes())


def load_activations(path) -> list[SparseActivation]:
    data = open(path, "rb").read()
    offset = 0

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise FormatError(f"truncated activation file {path}")
        out = struct.unpack_from(fmt, data, offset)
        offset += size
        return out

    (n,) = take("<I")
    out = []
    for _ in range(n):
        (id_len,) = take("<H")
        owner = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        (count,) = take("<I")
        indices = np.frombuffer(data, dtype="<u4", count=count, offset=offset)
        offset += count * 4
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        if indices.size != count or values.size != count:
            raise FormatError(f"truncated activation file {path}")
        out.append(make_activation(owner, indices.astype(np.int64), values.copy()))
    return out
