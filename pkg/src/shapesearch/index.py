"""Pipeline composition: index building, querying, persistence, evaluation.

The index bundle holds, per channel, a codebook and a first inverted file,
plus the per-channel pre-augmentation activations of every database shape and
the second inverted file over the final aggregated activations. Everything is
immutable after build; queries are pure readers.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import codebook as cb
from . import features as ft
from . import matching as mt
from . import rerank as rr
from .errors import (
    AllShapesFailed,
    ChannelMismatch,
    EmptyIndex,
    EmptyManifest,
    FormatError,
    ShapeSearchError,
)
from .evaluation import EvalReport, aggregate_report, score_ranking
from .mesh import Mesh, load_mesh, normalize_pose
from .render import camera_positions, render_depth

log = logging.getLogger(__name__)

FORMAT_VERSION = "shapesearch-index-1"

CHANNELS = ("A", "B")


@dataclass(frozen=True)
class IndexConfig:
    n_views: int = 64
    resolution: int = 64
    grid: int = 8
    cells: int = 4
    bins: int = 8
    codebook_size: int = 256
    ma: int = 2
    k1: int = 10
    k2: int = 4
    alpha: float = 0.5
    seed: int = 0
    imported: bool = False  # channels come from feature files, not rendering

    def __post_init__(self):
        if min(self.n_views, self.codebook_size, self.ma, self.k1, self.k2) < 1:
            raise ValueError("all counts must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.ma > self.codebook_size:
            raise ValueError("ma must not exceed the codebook size")


@dataclass
class IndexBundle:
    config: IndexConfig
    shape_ids: list[str]
    labels: dict[str, str]
    codebooks: dict[str, cb.Codebook]
    fifs: dict[str, mt.FirstInvertedFile]
    raw_activations: dict[str, list[rr.SparseActivation]]
    sif: rr.SecondInvertedFile
    version: str = FORMAT_VERSION

    @property
    def n_shapes(self) -> int:
        return len(self.shape_ids)

    def viewset_matrix(self, channel: str, ordinal: int) -> np.ndarray:
        """Database view features for one shape, recovered from the postings."""
        return self.fifs[channel].shape_matrix(ordinal)


def read_manifest(path) -> list[tuple[Path, str]]:
    """Read `path<TAB>label` rows; relative paths resolve against the manifest."""
    path = Path(path)
    base = path.parent
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if "\t" in line:
            rel, label = line.split("\t", 1)
        else:
            rel, label = line, ""
        rows.append((base / rel, label.strip()))
    if not rows:
        raise EmptyManifest(f"manifest {path} lists no shapes")
    return rows


def compute_viewset(mesh: Mesh, config: IndexConfig) -> ft.ViewSet:
    """Render all views of a mesh and extract both descriptor channels."""
    normalized = normalize_pose(mesh)
    vs = ft.ViewSet(shape_id=mesh.id)
    for camera in camera_positions(config.n_views):
        image = render_depth(normalized, camera, config.resolution)
        vs.add("A", ft.extract_grid_descriptor(image, config.grid, channel="A"))
        vs.add("B", ft.extract_gradient_descriptor(image, config.cells, config.bins, channel="B"))
    return vs


def _gather_viewsets(manifest_rows, config: IndexConfig, jobs: int = 1):
    def build_one(row):
        path, _label = row
        mesh = load_mesh(path)
        return compute_viewset(mesh, config)

    results = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(build_one, row) for row in manifest_rows]
            # merge in manifest order so the bundle is identical for any job count
            for row, fut in zip(manifest_rows, futures):
                try:
                    results.append((row, fut.result()))
                except (ShapeSearchError, OSError) as exc:
                    log.warning("skipping shape %s: %s", row[0], exc)
    else:
        for row in manifest_rows:
            try:
                results.append((row, build_one(row)))
            except (ShapeSearchError, OSError) as exc:
                log.warning("skipping shape %s: %s", row[0], exc)
    return results


def _database_scores(fif, viewsets_matrices, ma):
    return [mt.query_fif(fif, mat, ma=ma) for mat in viewsets_matrices]


def build_index(manifest, config: IndexConfig = IndexConfig(), jobs: int = 1,
                feature_files: dict[str, str] | None = None) -> IndexBundle:
    """Build the full index from a manifest path or (path, label) rows.

    With ``feature_files`` ({"A": path, "B": path}) precomputed descriptors
    are imported instead of rendering; manifest paths then only carry labels,
    keyed by file stem.
    """
    if isinstance(manifest, (str, Path)):
        rows = read_manifest(manifest)
    else:
        rows = [(Path(p), lab) for p, lab in manifest]
    if not rows:
        raise EmptyManifest("no shapes listed")

    if feature_files:
        if set(feature_files) != set(CHANNELS):
            raise ChannelMismatch(f"feature files required for channels {CHANNELS}")
        config = replace(config, imported=True)
        imported = {ch: ft.import_features(feature_files[ch], ch) for ch in CHANNELS}
        viewsets = []
        labels = {}
        for path, label in rows:
            sid = Path(path).stem
            if sid not in imported["A"] or sid not in imported["B"]:
                log.warning("skipping shape %s: not present in feature files", sid)
                continue
            vs = ft.ViewSet(shape_id=sid)
            for ch in CHANNELS:
                vs.descriptors[ch] = imported[ch][sid].descriptors[ch]
            viewsets.append(vs)
            labels[sid] = label
    else:
        built = _gather_viewsets(rows, config, jobs=jobs)
        viewsets = [vs for _row, vs in built]
        labels = {vs.shape_id: row[1] for row, vs in built}
    if not viewsets:
        raise AllShapesFailed("every shape in the manifest failed to build")

    shape_ids = [vs.shape_id for vs in viewsets]
    codebooks = {}
    fifs = {}
    for ch in CHANNELS:
        vectors = np.concatenate([vs.matrix(ch) for vs in viewsets], axis=0)
        vectors = vectors[vectors.any(axis=1)]
        codebooks[ch] = cb.train_codebook(
            vectors, k=config.codebook_size, seed=config.seed, channel=ch
        )
        fifs[ch] = mt.build_fif(viewsets, codebooks[ch], ch)

    # per-channel match scores of every database shape against the database
    scores = {
        ch: _database_scores(fifs[ch], [vs.matrix(ch) for vs in viewsets], config.ma)
        for ch in CHANNELS
    }
    raw_acts = {
        ch: [
            rr.build_activation(scores[ch][i], config.k1, owner=shape_ids[i])
            for i in range(len(shape_ids))
        ]
        for ch in CHANNELS
    }
    neighbors = {
        ch: [rr.top_neighbors(scores[ch][i], config.k2) for i in range(len(shape_ids))]
        for ch in CHANNELS
    }
    aug_a, aug_b = rr.co_augment(
        raw_acts["A"], raw_acts["B"], neighbors["A"], neighbors["B"]
    )
    final = [
        rr.aggregate(fa, fb, config.alpha) for fa, fb in zip(aug_a, aug_b)
    ]
    sif = rr.build_sif(final, shape_ids=shape_ids)
    return IndexBundle(
        config=config,
        shape_ids=shape_ids,
        labels=labels,
        codebooks=codebooks,
        fifs=fifs,
        raw_activations=raw_acts,
        sif=sif,
    )


def _query_scores(bundle: IndexBundle, viewset: ft.ViewSet, exact: bool) -> dict[str, np.ndarray]:
    scores = {}
    for ch in CHANNELS:
        try:
            mat = viewset.matrix(ch)
        except KeyError as exc:
            raise ChannelMismatch(f"query lacks channel {ch!r}") from exc
        if exact:
            scores[ch] = np.array(
                [
                    mt.exact_similarity(mat, bundle.viewset_matrix(ch, i))
                    for i in range(bundle.n_shapes)
                ]
            )
        else:
            scores[ch] = mt.query_fif(bundle.fifs[ch], mat, ma=bundle.config.ma)
    return scores


def rerank_scores(bundle: IndexBundle, channel_scores: dict[str, np.ndarray]) -> np.ndarray:
    """Contextual re-ranked similarity from per-channel match scores."""
    config = bundle.config
    neighbors = {ch: rr.top_neighbors(channel_scores[ch], config.k2) for ch in CHANNELS}
    # cross-channel augmentation against the stored pre-augmentation database
    # activations; a re-submitted database shape reproduces its stored context
    fa = rr.mean_activation("query", bundle.raw_activations["A"], neighbors["B"])
    fb = rr.mean_activation("query", bundle.raw_activations["B"], neighbors["A"])
    final = rr.aggregate(fa, fb, config.alpha)
    return rr.query_sif(bundle.sif, final)


def query(bundle: IndexBundle, target, top_k: int = 10, exact: bool = False,
          rerank: bool = True):
    """Rank database shapes for a query mesh or view set.

    Returns (results, timings): results are (shape_id, score, label) sorted by
    score descending with ties broken by id; timings report the render and the
    match+rerank phases separately, in seconds.
    """
    if bundle.n_shapes == 0:
        raise EmptyIndex("index holds no shapes")
    timings = {}
    if isinstance(target, Mesh):
        if bundle.config.imported:
            raise ChannelMismatch("index was built from imported features; query by id instead")
        t0 = time.perf_counter()
        viewset = compute_viewset(target, bundle.config)
        timings["render"] = time.perf_counter() - t0
    else:
        viewset = target
        timings["render"] = 0.0

    t0 = time.perf_counter()
    channel_scores = _query_scores(bundle, viewset, exact)
    if rerank:
        final_scores = rerank_scores(bundle, channel_scores)
    else:
        final_scores = np.mean([channel_scores[ch] for ch in CHANNELS], axis=0)
    timings["match"] = time.perf_counter() - t0

    # ties break by id, except that the query's own database entry (if any)
    # wins its ties so self-retrieval always ranks first
    ids = np.array(bundle.shape_ids)
    not_self = ids != viewset.shape_id
    order = np.lexsort((ids, not_self, -final_scores))[: min(top_k, bundle.n_shapes)]
    results = [
        (bundle.shape_ids[i], float(final_scores[i]), bundle.labels.get(bundle.shape_ids[i], ""))
        for i in order
    ]
    return results, timings


def query_by_id(bundle: IndexBundle, shape_id: str, top_k: int = 10,
                exact: bool = False, rerank: bool = True):
    """Query with a database shape's stored view features."""
    if shape_id not in bundle.shape_ids:
        raise EmptyIndex(f"unknown shape id {shape_id!r}")
    ordinal = bundle.shape_ids.index(shape_id)
    vs = ft.ViewSet(shape_id=shape_id)
    for ch in CHANNELS:
        mat = bundle.viewset_matrix(ch, ordinal)
        vs.descriptors[ch] = [
            ft.ViewDescriptor(values=row.astype(np.float32), channel=ch) for row in mat
        ]
    return query(bundle, vs, top_k=top_k, exact=exact, rerank=rerank)


def evaluate_index(bundle: IndexBundle, exact: bool = False, rerank: bool = True) -> EvalReport:
    """Run every database shape as a query, excluding itself from its ranking."""
    class_sizes = {}
    for sid in bundle.shape_ids:
        class_sizes[bundle.labels.get(sid, "")] = class_sizes.get(bundle.labels.get(sid, ""), 0) + 1
    per_query = []
    skipped = 0
    for sid in bundle.shape_ids:
        label = bundle.labels.get(sid, "")
        if class_sizes[label] < 2:
            skipped += 1
            continue
        results, _t = query_by_id(bundle, sid, top_k=bundle.n_shapes,
                                  exact=exact, rerank=rerank)
        ranked_labels = [lab for rid, _s, lab in results if rid != sid]
        per_query.append(score_ranking(label, ranked_labels, class_sizes[label]))
    return aggregate_report(per_query, n_skipped=skipped)


def exact_baseline_report(bundle: IndexBundle, channel: str = "B",
                          variant: str = "robust") -> EvalReport:
    """Single-channel exact-Hausdorff ranking over the database, scored."""
    mats = [bundle.viewset_matrix(channel, i) for i in range(bundle.n_shapes)]
    class_sizes = {}
    for sid in bundle.shape_ids:
        lab = bundle.labels.get(sid, "")
        class_sizes[lab] = class_sizes.get(lab, 0) + 1
    per_query = []
    skipped = 0
    for qi, sid in enumerate(bundle.shape_ids):
        label = bundle.labels.get(sid, "")
        if class_sizes[label] < 2:
            skipped += 1
            continue
        scores = np.array([mt.exact_similarity(mats[qi], mats[pi]) for pi in range(bundle.n_shapes)])
        order = np.lexsort((np.array(bundle.shape_ids), -scores))
        ranked_labels = [
            bundle.labels.get(bundle.shape_ids[i], "") for i in order if i != qi
        ]
        per_query.append(score_ranking(label, ranked_labels, class_sizes[label]))
    return aggregate_report(per_query, n_skipped=skipped)


def save_bundle(bundle: IndexBundle, out_dir) -> Path:
    """Persist the bundle as a versioned directory; deterministic bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"version": bundle.version, "config": asdict(bundle.config)}
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "shapes.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for sid in bundle.shape_ids:
            fh.write(f"{sid}\t{bundle.labels.get(sid, '')}\n")
    for ch in CHANNELS:
        cb.save_codebook(bundle.codebooks[ch], out / f"codebook_{ch}.bin")
        mt.save_fif(bundle.fifs[ch], out / f"fif_{ch}.bin")
        rr.save_activations(bundle.raw_activations[ch], out / f"activations_{ch}.bin")
    rr.save_sif(bundle.sif, out / "sif.bin")
    return out


def load_bundle(index_dir) -> IndexBundle:
    index_dir = Path(index_dir)
    try:
        with open(index_dir / "config.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"no index bundle at {index_dir}") from exc
    if meta.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported index version {meta.get('version')!r}")
    config = IndexConfig(**meta["config"])
    shape_ids = []
    labels = {}
    for line in (index_dir / "shapes.tsv").read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        sid, _, label = line.partition("\t")
        shape_ids.append(sid)
        labels[sid] = label
    codebooks = {}
    fifs = {}
    raw_acts = {}
    for ch in CHANNELS:
        codebooks[ch] = cb.load_codebook(index_dir / f"codebook_{ch}.bin")
        fifs[ch] = mt.load_fif(index_dir / f"fif_{ch}.bin", codebooks[ch])
        raw_acts[ch] = rr.load_activations(index_dir / f"activations_{ch}.bin")
    sif = rr.load_sif(index_dir / "sif.bin")
    return IndexBundle(
        config=config,
        shape_ids=shape_ids,
        labels=labels,
        codebooks=codebooks,
        fifs=fifs,
        raw_activations=raw_acts,
        sif=sif,
        version=meta["version"],
    )
