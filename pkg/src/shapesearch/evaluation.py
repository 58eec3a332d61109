"""Rank-based retrieval metrics: NN, FT, ST, MAP, AUC and PR curves.

The query is always excluded from its own ranking before scoring. AUC is the
trapezoidal area under the mean 11-point interpolated precision-recall curve;
this definition is echoed in the emitted report so numbers are comparable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import NoValidQueries, SingletonClass

RECALL_LEVELS = np.linspace(0.0, 1.0, 11)

AUC_DEFINITION = "trapezoid under the 11-point interpolated mean precision-recall curve"


@dataclass(frozen=True)
class QueryMetrics:
    nn: float
    ft: float
    st: float
    ap: float
    pr11: np.ndarray  # interpolated precision at the 11 recall levels


@dataclass(frozen=True)
class EvalReport:
    nn: float
    ft: float
    st: float
    map: float
    auc: float
    pr11: np.ndarray
    n_queries: int
    n_skipped: int = 0


def score_ranking(query_label: str, ranked_labels, class_size: int) -> QueryMetrics:
    """Score one ranking (query already excluded) against its class label.

    ``class_size`` counts the query itself, so there are class_size - 1
    relevant items to find.
    """
    n_relevant = class_size - 1
    if n_relevant < 1:
        raise SingletonClass(f"class of {query_label!r} has no other member")
    rel = np.array([lab == query_label for lab in ranked_labels], dtype=bool)

    nn = float(rel[0]) if len(rel) else 0.0
    ft = float(rel[:n_relevant].sum()) / n_relevant
    st = float(rel[: 2 * n_relevant].sum()) / n_relevant

    ranks = np.flatnonzero(rel) + 1  # 1-based ranks of relevant items
    hits = np.arange(1, len(ranks) + 1)
    precisions = hits / ranks
    ap = float(precisions.sum()) / n_relevant

    recalls = hits / n_relevant
    pr11 = np.zeros(len(RECALL_LEVELS))
    for j, level in enumerate(RECALL_LEVELS):
        reachable = precisions[recalls >= level - 1e-12]
        pr11[j] = float(reachable.max()) if len(reachable) else 0.0
    return QueryMetrics(nn=nn, ft=ft, st=st, ap=ap, pr11=pr11)


def aggregate_report(per_query, n_skipped: int = 0) -> EvalReport:
    """Arithmetic means over queries; the PR curve is averaged pointwise."""
    per_query = list(per_query)
    if not per_query:
        raise NoValidQueries("no valid queries to aggregate")
    pr11 = np.mean([m.pr11 for m in per_query], axis=0)
    return EvalReport(
        nn=float(np.mean([m.nn for m in per_query])),
        ft=float(np.mean([m.ft for m in per_query])),
        st=float(np.mean([m.st for m in per_query])),
        map=float(np.mean([m.ap for m in per_query])),
        auc=float(np.trapezoid(pr11, RECALL_LEVELS)),
        pr11=pr11,
        n_queries=len(per_query),
        n_skipped=n_skipped,
    )


def report_to_dict(report: EvalReport, extra: dict | None = None) -> dict:
    out = {
        "auc_definition": AUC_DEFINITION,
        "n_queries": report.n_queries,
        "n_skipped": report.n_skipped,
        "NN": report.nn,
        "FT": report.ft,
        "ST": report.st,
        "MAP": report.map,
        "AUC": report.auc,
        "pr_recall": [float(r) for r in RECALL_LEVELS],
        "pr_precision": [float(p) for p in report.pr11],
    }
    if extra:
        out.update(extra)
    return out


def write_report_json(report: EvalReport, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report, extra), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pr_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recall", "precision"])
        for r, p in zip(RECALL_LEVELS, report.pr11):
            writer.writerow([f"{r:.2f}", f"{p:.6f}"])


def plot_pr_svg(report: EvalReport, path, title: str = "precision-recall") -> None:
    """Optional PR-curve plot; requires matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(RECALL_LEVELS, report.pr11, marker="o")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
