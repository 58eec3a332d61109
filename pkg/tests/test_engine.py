import json
import threading
import urllib.request

import numpy as np
import pytest

from shapesearch import features as ft
from shapesearch.cli import main
from shapesearch.dataset import CLASS_NAMES, gen_dataset
from shapesearch.errors import BadSpec, ChannelMismatch, EmptyIndex, EmptyManifest
from shapesearch.index import (
    CHANNELS,
    IndexConfig,
    build_index,
    evaluate_index,
    load_bundle,
    query,
    query_by_id,
    read_manifest,
    save_bundle,
)
from shapesearch.mesh import load_mesh

SMALL = IndexConfig(n_views=8, resolution=16, codebook_size=8, ma=2, k1=4, k2=2)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = gen_dataset(root, classes=3, instances=3, noise=0.01, seed=11)
    return manifest


@pytest.fixture(scope="session")
def bundle(corpus):
    return build_index(corpus, SMALL)


# --- dataset ------------------------------------------------------------


def test_gen_dataset_counts_and_manifest(corpus):
    rows = read_manifest(corpus)
    assert len(rows) == 9
    labels = {lab for _p, lab in rows}
    assert labels == set(CLASS_NAMES[:3])
    for path, _lab in rows:
        assert path.exists()
        assert path.read_text().startswith("OFF\n")


def test_gen_dataset_deterministic(tmp_path):
    m1 = gen_dataset(tmp_path / "a", classes=2, instances=2, seed=5)
    m2 = gen_dataset(tmp_path / "b", classes=2, instances=2, seed=5)
    for (p1, l1), (p2, l2) in zip(read_manifest(m1), read_manifest(m2)):
        assert p1.name == p2.name and l1 == l2
        assert p1.read_bytes() == p2.read_bytes()


def test_gen_dataset_zero_noise_valid(tmp_path):
    manifest = gen_dataset(tmp_path, classes=2, instances=2, noise=0.0, seed=1)
    for path, _lab in read_manifest(manifest):
        mesh = load_mesh(path)
        assert len(mesh.vertices) > 0


def test_gen_dataset_bad_spec(tmp_path):
    with pytest.raises(BadSpec):
        gen_dataset(tmp_path, classes=1)
    with pytest.raises(BadSpec):
        gen_dataset(tmp_path, classes=9)
    with pytest.raises(BadSpec):
        gen_dataset(tmp_path, instances=1)


# --- build --------------------------------------------------------------


def test_build_posting_conservation(bundle):
    # every rendered view of every shape lands in exactly one posting list
    for ch in CHANNELS:
        assert bundle.fifs[ch].total_postings == bundle.n_shapes * SMALL.n_views


def test_build_skips_unreadable_shape(corpus, caplog):
    rows = read_manifest(corpus)[:3] + [(corpus.parent / "missing.off", "ghost")]
    with caplog.at_level("WARNING"):
        b = build_index(rows, SMALL)
    assert b.n_shapes == 3
    assert "skipping" in caplog.text


def test_build_empty_manifest_raises():
    with pytest.raises(EmptyManifest):
        build_index([], SMALL)


def test_build_jobs_parallel_identical(corpus):
    rows = read_manifest(corpus)[:4]
    b1 = build_index(rows, SMALL, jobs=1)
    b2 = build_index(rows, SMALL, jobs=3)
    assert b1.shape_ids == b2.shape_ids
    for ch in CHANNELS:
        assert (b1.codebooks[ch].centroids == b2.codebooks[ch].centroids).all()
        for i in range(b1.n_shapes):
            np.testing.assert_array_equal(
                b1.viewset_matrix(ch, i), b2.viewset_matrix(ch, i)
            )


def test_build_from_imported_features(bundle, corpus, tmp_path):
    viewsets = []
    for i, sid in enumerate(bundle.shape_ids):
        vs = ft.ViewSet(shape_id=sid)
        for ch in CHANNELS:
            for row in bundle.viewset_matrix(ch, i):
                vs.add(ch, ft.ViewDescriptor(values=row.astype(np.float32), channel=ch))
        viewsets.append(vs)
    paths = {}
    for ch in CHANNELS:
        paths[ch] = tmp_path / f"feat_{ch}.bin"
        ft.write_features(paths[ch], viewsets, ch)

    rows = read_manifest(corpus)
    b2 = build_index(rows, SMALL, feature_files=paths)
    assert b2.config.imported is True
    assert b2.shape_ids == bundle.shape_ids
    # import re-normalizes, which may flip float32 bits, so compare the
    # recovered view features within that tolerance rather than full rankings
    for ch in CHANNELS:
        for i in range(bundle.n_shapes):
            a = np.asarray(sorted(map(tuple, bundle.viewset_matrix(ch, i))))
            b = np.asarray(sorted(map(tuple, b2.viewset_matrix(ch, i))))
            np.testing.assert_allclose(a, b, atol=1e-6)
    for sid in bundle.shape_ids[:3]:
        r2, _ = query_by_id(b2, sid, top_k=3)
        assert r2[0][0] == sid


def test_imported_index_rejects_mesh_queries(bundle, corpus, tmp_path):
    with pytest.raises(ChannelMismatch):
        build_index(read_manifest(corpus), SMALL, feature_files={"A": "x"})


# --- query --------------------------------------------------------------


def test_query_by_mesh_self_retrieval(bundle, corpus):
    path, label = read_manifest(corpus)[0]
    mesh = load_mesh(path)
    results, timings = query(bundle, mesh, top_k=3)
    assert results[0][0] == mesh.id
    assert results[0][2] == label
    assert timings["render"] > 0.0


def test_query_top_k_truncates(bundle):
    results, _ = query_by_id(bundle, bundle.shape_ids[0], top_k=4)
    assert len(results) == 4
    results, _ = query_by_id(bundle, bundle.shape_ids[0], top_k=100)
    assert len(results) == bundle.n_shapes


def test_query_unknown_id(bundle):
    with pytest.raises(EmptyIndex):
        query_by_id(bundle, "no-such-shape")


def test_query_scores_sorted_descending(bundle):
    for exact in (False, True):
        for rerank in (False, True):
            results, _ = query_by_id(bundle, bundle.shape_ids[1],
                                     top_k=bundle.n_shapes,
                                     exact=exact, rerank=rerank)
            scores = [s for _i, s, _l in results]
            assert scores == sorted(scores, reverse=True)


def test_evaluate_index_runs(bundle):
    report = evaluate_index(bundle)
    assert report.n_queries == bundle.n_shapes
    assert 0.0 <= report.map <= 1.0


# --- persistence --------------------------------------------------------


def test_save_load_round_trip(bundle, tmp_path):
    out = save_bundle(bundle, tmp_path / "idx")
    loaded = load_bundle(out)
    assert loaded.shape_ids == bundle.shape_ids
    assert loaded.labels == bundle.labels
    assert loaded.config == bundle.config
    for sid in bundle.shape_ids:
        r1, _ = query_by_id(bundle, sid, top_k=bundle.n_shapes)
        r2, _ = query_by_id(loaded, sid, top_k=bundle.n_shapes)
        assert r1 == r2


def test_save_twice_byte_identical(bundle, tmp_path):
    out1 = save_bundle(bundle, tmp_path / "a")
    out2 = save_bundle(bundle, tmp_path / "b")
    for f1 in sorted(out1.iterdir()):
        assert (out2 / f1.name).read_bytes() == f1.read_bytes()


# --- service ------------------------------------------------------------


@pytest.fixture(scope="session")
def server(bundle):
    from shapesearch.service import make_server

    srv = make_server(bundle, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()
    srv.server_close()


def _get(url):
    with urllib.request.urlopen(url) as resp:
        return resp.status, json.loads(resp.read())


def test_service_health_and_shapes(server, bundle):
    status, body = _get(f"{server}/health")
    assert status == 200 and body["shapes"] == bundle.n_shapes
    status, body = _get(f"{server}/shapes")
    assert body["ids"] == bundle.shape_ids


def test_service_query_by_id(server, bundle):
    sid = bundle.shape_ids[0]
    status, body = _get(f"{server}/query?id={sid}&top_k=3")
    assert status == 200
    assert body["results"][0]["id"] == sid
    assert len(body["results"]) == 3
    assert "match" in body["timings_ms"]


def test_service_post_mesh(server, corpus, bundle):
    path, _lab = read_manifest(corpus)[2]
    req = urllib.request.Request(f"{server}/query?top_k=2", data=path.read_bytes(),
                                 method="POST")
    with urllib.request.urlopen(req) as resp:
        body = json.loads(resp.read())
    assert body["results"][0]["id"] == path.stem


def test_service_bad_requests(server):
    for url in (f"{server}/query", f"{server}/query?id=nope", f"{server}/missing"):
        with pytest.raises(urllib.error.HTTPError) as exc_info:
            urllib.request.urlopen(url)
        assert exc_info.value.code in (400, 404)
        assert "error" in json.loads(exc_info.value.read())


def test_service_concurrent_identical(server, bundle):
    sid = bundle.shape_ids[0]
    url = f"{server}/query?id={sid}&top_k=5"
    out = [None] * 6

    def hit(i):
        out[i] = _get(url)[1]["results"]

    threads = [threading.Thread(target=hit, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == out[0] for r in out)


# --- cli ----------------------------------------------------------------


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    idx = tmp_path / "idx"
    assert main(["gen-dataset", "--out", str(data), "--classes", "2",
                 "--instances", "2", "--seed", "3"]) == 0
    assert main(["build-index", "--manifest", str(data / "manifest.tsv"),
                 "--out", str(idx), "--views", "6", "--resolution", "16",
                 "--codebook-size", "4", "--k1", "3", "--k2", "2"]) == 0
    capsys.readouterr()

    assert main(["query", "--index", str(idx), "--id", "sphere_000", "--top-k", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split("\t")[1] == "sphere_000"

    report = tmp_path / "report.json"
    csv_path = tmp_path / "pr.csv"
    assert main(["evaluate", "--index", str(idx), "--report", str(report),
                 "--pr-csv", str(csv_path)]) == 0
    data = json.loads(report.read_text())
    assert set(data) >= {"NN", "FT", "ST", "MAP", "AUC"}
    assert csv_path.read_text().startswith("recall,precision")


def test_cli_query_by_mesh(tmp_path, capsys):
    data = tmp_path / "data"
    idx = tmp_path / "idx"
    main(["gen-dataset", "--out", str(data), "--classes", "2", "--instances", "2"])
    main(["build-index", "--manifest", str(data / "manifest.tsv"), "--out", str(idx),
          "--views", "6", "--resolution", "16", "--codebook-size", "4",
          "--k1", "3", "--k2", "2"])
    capsys.readouterr()
    rc = main(["query", "--index", str(idx), "--mesh", str(data / "box_001.off"),
               "--top-k", "1", "--exact"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "box_001" in out


def test_cli_error_exit_code(tmp_path, capsys):
    rc = main(["query", "--index", str(tmp_path / "nowhere"), "--id", "x"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
