import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapesearch.errors import NoValidQueries, SingletonClass
from shapesearch.evaluation import (
    RECALL_LEVELS,
    aggregate_report,
    report_to_dict,
    score_ranking,
    write_pr_csv,
    write_report_json,
)


def naive_ap(rel, n_relevant):
    """Mean of precision measured at each relevant rank."""
    total, hits = 0.0, 0
    for rank, r in enumerate(rel, start=1):
        if r:
            hits += 1
            total += hits / rank
    return total / n_relevant


def test_perfect_ranking():
    m = score_ranking("cat", ["cat"] * 4 + ["dog"] * 8, class_size=5)
    assert (m.nn, m.ft, m.st, m.ap) == (1.0, 1.0, 1.0, 1.0)
    assert (m.pr11 == 1.0).all()


def test_worst_ranking_relevant_last():
    m = score_ranking("cat", ["dog"] * 6 + ["cat"] * 2, class_size=3)
    assert m.nn == 0.0
    assert m.ft == 0.0
    assert m.st == 0.0
    assert m.ap == pytest.approx((1 / 7 + 2 / 8) / 2)


def test_relevant_irrelevant_relevant_hand_values():
    m = score_ranking("a", ["a", "b", "a"], class_size=3)
    assert m.nn == 1.0
    assert m.ft == 0.5
    assert m.st == 1.0
    assert m.ap == pytest.approx(5.0 / 6.0, abs=1e-12)


def test_ft_never_exceeds_st(rng):
    for _ in range(50):
        labels = ["a" if x < 0.3 else "b" for x in rng.random(20)]
        size = labels.count("a") + 1
        m = score_ranking("a", labels, class_size=size)
        assert m.ft <= m.st + 1e-12


def test_nn_is_binary(rng):
    for _ in range(20):
        labels = list(rng.choice(["a", "b"], size=10))
        if "a" not in labels:
            labels[0] = "a"
        m = score_ranking("a", labels, class_size=labels.count("a") + 1)
        assert m.nn in (0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=2, max_size=30).filter(lambda xs: any(xs)))
def test_ap_matches_naive_oracle(rel):
    labels = ["a" if r else "b" for r in rel]
    n_relevant = sum(rel)
    m = score_ranking("a", labels, class_size=n_relevant + 1)
    assert m.ap == pytest.approx(naive_ap(rel, n_relevant), abs=1e-12)


def test_metrics_invariant_under_score_monotone_transform(rng):
    # metrics depend only on rank order, so feed the same order twice
    labels = list(rng.choice(["a", "b", "c"], size=15))
    if "a" not in labels:
        labels[3] = "a"
    size = labels.count("a") + 1
    a = score_ranking("a", labels, class_size=size)
    b = score_ranking("a", labels, class_size=size)
    assert (a.nn, a.ft, a.st, a.ap) == (b.nn, b.ft, b.st, b.ap)


def test_interpolated_precision_nonincreasing(rng):
    for _ in range(30):
        labels = list(rng.choice(["a", "b"], size=12))
        if "a" not in labels:
            labels[0] = "a"
        m = score_ranking("a", labels, class_size=labels.count("a") + 1)
        assert (np.diff(m.pr11) <= 1e-12).all()


def test_singleton_class_raises():
    with pytest.raises(SingletonClass):
        score_ranking("a", ["b", "b"], class_size=1)


def test_aggregate_means():
    m1 = score_ranking("a", ["a", "b", "a"], class_size=3)
    m2 = score_ranking("a", ["b", "a", "a"], class_size=3)
    rep = aggregate_report([m1, m2], n_skipped=1)
    assert rep.nn == pytest.approx((m1.nn + m2.nn) / 2)
    assert rep.map == pytest.approx((m1.ap + m2.ap) / 2)
    assert rep.n_queries == 2
    assert rep.n_skipped == 1
    np.testing.assert_allclose(rep.pr11, (m1.pr11 + m2.pr11) / 2)


def test_aggregate_empty_raises():
    with pytest.raises(NoValidQueries):
        aggregate_report([])


def test_auc_matches_trapezoid_by_hand():
    m = score_ranking("a", ["a", "b", "a"], class_size=3)
    rep = aggregate_report([m])
    steps = 0.5 * (rep.pr11[:-1] + rep.pr11[1:]) * np.diff(RECALL_LEVELS)
    assert rep.auc == pytest.approx(float(steps.sum()), abs=1e-12)
    assert 0.0 <= rep.auc <= 1.0


def test_report_json_and_csv(tmp_path):
    rep = aggregate_report([score_ranking("a", ["a", "b", "a"], class_size=3)])
    jpath = tmp_path / "report.json"
    write_report_json(rep, jpath, extra={"mode": "test"})
    data = json.loads(jpath.read_text())
    assert data["MAP"] == pytest.approx(rep.map)
    assert data["mode"] == "test"
    assert "trapezoid" in data["auc_definition"]
    assert len(data["pr_precision"]) == 11

    cpath = tmp_path / "pr.csv"
    write_pr_csv(rep, cpath)
    rows = list(csv.reader(cpath.read_text().splitlines()))
    assert rows[0] == ["recall", "precision"]
    assert len(rows) == 12
    assert float(rows[1][1]) == pytest.approx(rep.pr11[0], abs=1e-6)


def test_report_to_dict_round_numbers():
    rep = aggregate_report([score_ranking("a", ["a", "a"], class_size=3)])
    d = report_to_dict(rep)
    assert d["NN"] == 1.0 and d["FT"] == 1.0 and d["ST"] == 1.0
