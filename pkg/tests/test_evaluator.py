import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfare.evaluator import (PredictionRecord, bucket_report, confusion_counts, pr_curve,
                             predict, prf1, read_csv_rows, threshold_monotonicity_check,
                             tune_threshold, write_bucket_csv, write_metrics_json, write_pr_csv)
from oracles import best_threshold, confusion, f1_from


def random_records(rng, n=None, num_labels=None, coarse=False):
    n = n if n is not None else int(rng.integers(1, 51))
    k = num_labels or int(rng.integers(2, 6))
    conf = rng.integers(1, 6, size=n) / 5 if coarse else rng.uniform(1 / k, 1, size=n)
    return [PredictionRecord(int(rng.integers(k)), float(c), int(rng.integers(k)),
                             int(rng.integers(3, 60)), int(rng.integers(0, 20)))
            for c in conf]


records_strategy = st.integers(0, 2**32 - 1).map(
    lambda s: random_records(np.random.default_rng(s), coarse=bool(s % 2)))


def test_worked_example():
    # 3 non-None predictions (2 right, 1 wrong) against 4 gold non-None
    recs = [PredictionRecord(1, 0.9, 1), PredictionRecord(2, 0.9, 2), PredictionRecord(1, 0.9, 2),
            PredictionRecord(0, 0.9, 3), PredictionRecord(0, 0.9, 0)]
    m = prf1(recs)
    assert (m.precision, m.recall, m.f1) == (2 / 3, 1 / 2, 4 / 7)


@settings(max_examples=200, deadline=None)
@given(records_strategy, st.floats(0, 1))
def test_prf1_matches_oracle(recs, t):
    m = prf1(recs, t)
    assert (m.tp, m.fp, m.fn) == confusion(recs, t)
    assert m.f1 == float(f1_from(m.tp, m.fp, m.fn))


def test_empty_and_degenerate():
    m = prf1([])
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    m = prf1([PredictionRecord(0, 0.9, 0)])
    assert m.f1 == 0.0
    with pytest.raises(ValueError):
        tune_threshold([])


@settings(max_examples=200, deadline=None)
@given(records_strategy)
def test_tune_threshold_matches_sweep(recs):
    t = tune_threshold(recs)
    t_ref, f1_ref = best_threshold(recs)
    assert t == t_ref
    assert prf1(recs, t).f1 == float(f1_ref)


@settings(max_examples=100, deadline=None)
@given(records_strategy)
def test_recall_monotone_and_sets_nested(recs):
    assert threshold_monotonicity_check(recs).ok
    ts = sorted({0.0} | {r.confidence for r in recs})
    for lo, hi in zip(ts, ts[1:]):
        at_lo = {i for i, r in enumerate(recs) if r.final(lo) != 0}
        at_hi = {i for i, r in enumerate(recs) if r.final(hi) != 0}
        assert at_hi <= at_lo


@settings(max_examples=100, deadline=None)
@given(records_strategy)
def test_pr_curve(recs):
    pts = pr_curve(recs)
    if not pts:
        assert all(r.pred == 0 for r in recs)
        return
    rec = [p.recall for p in pts]
    assert all(a <= b for a, b in zip(rec, rec[1:]))
    assert rec[-1] == prf1(recs, 0.0).recall


@settings(max_examples=100, deadline=None)
@given(records_strategy, st.sampled_from(["sentence_length", "entity_distance"]))
def test_bucket_counts_sum(recs, mode):
    rows = bucket_report(recs, mode, threshold=0.3)
    total = confusion_counts(recs, 0.3)
    assert tuple(sum(getattr(r.metrics, k) for r in rows) for k in ("tp", "fp", "fn")) == total
    assert sum(r.count for r in rows) == len(recs)


def test_bucket_edges_inclusive():
    recs = [PredictionRecord(1, 1.0, 1, length=L) for L in (20, 21, 40, 41)]
    rows = bucket_report(recs, "sentence_length")
    assert [r.count for r in rows] == [1, 2, 1]
    assert [(r.low, r.high) for r in rows] == [(0, 20), (21, 40), (41, float("inf"))]
    with pytest.raises(ValueError):
        bucket_report(recs, "sentence_length", [5, 5])
    with pytest.raises(ValueError):
        bucket_report(recs, "width")


def test_flagged_bucket_without_gold():
    rows = bucket_report([PredictionRecord(1, 0.9, 0, length=3)], "sentence_length")
    assert rows[0].flagged and rows[0].metrics.f1 == 0.0


def test_predict_thresholding():
    assert predict([0.2, 0.5, 0.3], 0.0) == 1
    assert predict([0.2, 0.5, 0.3], 0.6) == 0
    assert predict([0.6, 0.4], 0.0) == 0
    assert predict([0.1, 0.45, 0.45], 0.0) == 1   # ties go to the lower id


def test_unknown_gold_counts_as_miss():
    m = prf1([PredictionRecord(1, 0.9, -1)])
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)


def test_writers(tmp_path):
    recs = [PredictionRecord(1, 0.9, 1, 5, 2), PredictionRecord(2, 0.4, 1, 30, 12)]
    cfg = {"seed": 3}
    write_metrics_json(prf1(recs), 0.5, tmp_path / "m.json", cfg)
    obj = json.loads((tmp_path / "m.json").read_text())
    assert obj["config"] == cfg and obj["threshold"] == 0.5 and obj["tp"] == 1
    write_pr_csv(pr_curve(recs), tmp_path / "pr.csv", cfg)
    write_bucket_csv(bucket_report(recs, "entity_distance"), tmp_path / "b.csv", cfg)
    assert (tmp_path / "pr.csv").read_text().startswith('# config: {"seed": 3}')
    rows = read_csv_rows(tmp_path / "pr.csv")
    assert rows[0]["rank"] == "1" and len(rows) == 2
    assert len(read_csv_rows(tmp_path / "b.csv")) == 3
