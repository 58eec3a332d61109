"""Command-line interface: build-index, query, evaluate, gen-dataset, serve."""

from __future__ import annotations

import argparse
import logging
import sys

from .dataset import gen_dataset
from .errors import ShapeSearchError
from .evaluation import plot_pr_svg, write_pr_csv, write_report_json
from .index import (
    IndexConfig,
    build_index,
    evaluate_index,
    load_bundle,
    query,
    query_by_id,
    save_bundle,
)
from .mesh import load_mesh
from .service import serve


def _add_build(sub):
    p = sub.add_parser("build-index", help="build and persist an index from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, default=64)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--codebook-size", type=int, default=256)
    p.add_argument("--ma", type=int, default=2)
    p.add_argument("--k1", type=int, default=10)
    p.add_argument("--k2", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--features-a", help="channel A feature file (skips rendering)")
    p.add_argument("--features-b", help="channel B feature file (skips rendering)")


def _add_query(sub):
    p = sub.add_parser("query", help="rank database shapes for a query")
    p.add_argument("--index", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mesh", help="path to an OFF/OBJ query mesh")
    group.add_argument("--id", help="database shape id")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--exact", action="store_true",
                   help="exact Hausdorff matching instead of the inverted file")
    p.add_argument("--no-rerank", action="store_true",
                   help="rank by mean per-channel match score, skip re-ranking")


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="run every database shape as a query and score")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", help="unused when labels are stored in the index",
                   default=None)
    p.add_argument("--report", required=True, help="output JSON path")
    p.add_argument("--pr-csv", help="optional CSV of PR-curve samples")
    p.add_argument("--plot", help="optional SVG plot of the PR curve")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--no-rerank", action="store_true")


def _add_gen(sub):
    p = sub.add_parser("gen-dataset", help="generate the synthetic OFF corpus")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the HTTP query service")
    p.add_argument("--index", required=True)
    p.add_argument("--listen", default="127.0.0.1:8080", metavar="HOST:PORT")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapesearch")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_build(sub)
    _add_query(sub)
    _add_evaluate(sub)
    _add_gen(sub)
    _add_serve(sub)
    return parser


def _cmd_build(args) -> int:
    config = IndexConfig(
        n_views=args.views,
        resolution=args.resolution,
        codebook_size=args.codebook_size,
        ma=args.ma,
        k1=args.k1,
        k2=args.k2,
        alpha=args.alpha,
        seed=args.seed,
    )
    feature_files = None
    if args.features_a or args.features_b:
        if not (args.features_a and args.features_b):
            print("error: --features-a and --features-b must be given together",
                  file=sys.stderr)
            return 2
        feature_files = {"A": args.features_a, "B": args.features_b}
    bundle = build_index(args.manifest, config, jobs=args.jobs,
                         feature_files=feature_files)
    out = save_bundle(bundle, args.out)
    print(f"indexed {bundle.n_shapes} shapes -> {out}")
    return 0


def _cmd_query(args) -> int:
    bundle = load_bundle(args.index)
    if args.mesh:
        mesh = load_mesh(args.mesh)
        results, timings = query(bundle, mesh, top_k=args.top_k,
                                 exact=args.exact, rerank=not args.no_rerank)
    else:
        results, timings = query_by_id(bundle, args.id, top_k=args.top_k,
                                       exact=args.exact, rerank=not args.no_rerank)
    for rank, (sid, score, label) in enumerate(results, start=1):
        print(f"{rank}\t{sid}\t{score:.6f}\t{label}")
    phases = ", ".join(f"{k}={v * 1000.0:.1f}ms" for k, v in timings.items())
    print(f"# {phases}", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    bundle = load_bundle(args.index)
    report = evaluate_index(bundle, exact=args.exact, rerank=not args.no_rerank)
    write_report_json(report, args.report,
                      extra={"exact": args.exact, "rerank": not args.no_rerank})
    if args.pr_csv:
        write_pr_csv(report, args.pr_csv)
    if args.plot:
        plot_pr_svg(report, args.plot)
    print(
        f"NN={report.nn:.4f} FT={report.ft:.4f} ST={report.st:.4f} "
        f"MAP={report.map:.4f} AUC={report.auc:.4f} ({report.n_queries} queries)"
    )
    return 0


def _cmd_gen(args) -> int:
    manifest = gen_dataset(args.out, classes=args.classes, instances=args.instances,
                           noise=args.noise, seed=args.seed)
    print(f"wrote {manifest}")
    return 0


def _cmd_serve(args) -> int:
    host, _, port = args.listen.rpartition(":")
    bundle = load_bundle(args.index)
    print(f"serving {bundle.n_shapes} shapes on {host}:{port}")
    serve(bundle, host or "127.0.0.1", int(port))
    return 0


_COMMANDS = {
    "build-index": _cmd_build,
    "query": _cmd_query,
    "evaluate": _cmd_evaluate,
    "gen-dataset": _cmd_gen,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return _COMMANDS[args.command](args)
    except ShapeSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
