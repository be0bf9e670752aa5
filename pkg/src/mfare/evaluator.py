"""Thresholded prediction, None-excluded micro P/R/F1, PR curves and bucketed reports."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

NONE_ID = 0
LENGTH_EDGES = (20, 40)
DISTANCE_EDGES = (5, 10)


@dataclass(frozen=True)
class PredictionRecord:
    pred: int            # argmax label id before thresholding
    confidence: float    # softmax probability of the argmax
    gold: int
    length: int = 0
    distance: int = 0    # gap between the entities' start tokens

    def final(self, threshold: float) -> int:
        if self.pred != NONE_ID and self.confidence < threshold:
            return NONE_ID
        return self.pred


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def predict(probs, threshold: float = 0.0) -> int:
    p = np.asarray(getattr(probs, "data", probs)).reshape(-1)
    top = int(np.argmax(p))  # lowest id on ties
    if top == NONE_ID or p[top] < threshold:
        return NONE_ID
    return top


def metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    # equals 2pr/(p+r) but rounds once, so exact fractions stay exact
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return Metrics(p, r, f1, tp, fp, fn)


def confusion_counts(records, threshold: float = 0.0) -> tuple:
    tp = fp = fn = 0
    for r in records:
        pred = r.final(threshold)
        if pred != NONE_ID:
            if pred == r.gold:
                tp += 1
            else:
                fp += 1
        if r.gold != NONE_ID and pred != r.gold:
            fn += 1
    return tp, fp, fn


def prf1(records: Sequence[PredictionRecord], threshold: float = 0.0) -> Metrics:
    return metrics_from_counts(*confusion_counts(records, threshold))


def _sweep(records):
    """Candidate thresholds (ascending) with tp/fp counts at each."""
    conf = np.array([r.confidence for r in records], dtype=np.float64)
    positive = np.array([r.pred != NONE_ID for r in records], dtype=bool)
    correct = positive & np.array([r.pred == r.gold for r in records], dtype=bool)
    gold_pos = sum(r.gold != NONE_ID for r in records)
    cands = np.unique(np.concatenate([[0.0], conf]))
    pos_sorted = np.sort(conf[positive])
    cor_sorted = np.sort(conf[correct])
    # predictions surviving threshold t are those with confidence >= t
    n_pos = pos_sorted.size - np.searchsorted(pos_sorted, cands, side="left")
    tp = cor_sorted.size - np.searchsorted(cor_sorted, cands, side="left")
    fp = n_pos - tp
    return cands, tp, fp, gold_pos


def tune_threshold(records: Sequence[PredictionRecord]) -> float:
    """Threshold in {0} U {observed confidences} with the best F1; ties -> smallest."""
    if not records:
        raise ValueError("threshold tuning needs at least one record")
    cands, tp, fp, gold_pos = _sweep(records)
    best_t, best_f1 = 0.0, -1.0
    for t, a, b in zip(cands, tp, fp):
        f1 = metrics_from_counts(int(a), int(b), int(gold_pos - a)).f1
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t


@dataclass
class MonotonicityReport:
    ok: bool
    violations: list   # (lower threshold, higher threshold, recall_low, recall_high)


def threshold_monotonicity_check(records) -> MonotonicityReport:
    """Recall must not increase as the threshold rises."""
    if not records or not any(r.pred != NONE_ID for r in records):
        return MonotonicityReport(True, [])
    cands = sorted({0.0, 1.0} | {float(r.confidence) for r in records})
    recalls = [prf1(records, t).recall for t in cands]
    bad = [(cands[i], cands[i + 1], recalls[i], recalls[i + 1])
           for i in range(len(cands) - 1) if recalls[i + 1] > recalls[i]]
    return MonotonicityReport(not bad, bad)


@dataclass(frozen=True)
class PRPoint:
    rank: int
    confidence: float
    precision: float
    recall: float


def pr_curve(records: Sequence[PredictionRecord]) -> list:
    """Cumulative precision/recall down the confidence-ranked positive predictions."""
    positives = [r for r in records if r.pred != NONE_ID]
    if not positives:
        log.warning("no positive predictions; PR curve is empty")
        return []
    gold_pos = sum(r.gold != NONE_ID for r in records)
    order = sorted(range(len(positives)), key=lambda i: -positives[i].confidence)
    points, tp = [], 0
    for rank, i in enumerate(order, 1):
        r = positives[i]
        tp += r.pred == r.gold
        points.append(PRPoint(rank, r.confidence, tp / rank, tp / gold_pos if gold_pos else 0.0))
    return points


@dataclass(frozen=True)
class BucketRow:
    low: float
    high: float
    metrics: Metrics
    count: int
    gold_positives: int

    @property
    def flagged(self) -> bool:
        return self.gold_positives == 0


def bucket_report(records, mode: str = "sentence_length", bucket_edges=None,
                  threshold: float = 0.0) -> list:
    """Metrics per bucket; edges are inclusive upper bounds (<=e0, <=e1, ..., >last)."""
    if mode not in ("sentence_length", "entity_distance"):
        raise ValueError(f"unknown bucket mode {mode!r}")
    if bucket_edges is None:
        bucket_edges = LENGTH_EDGES if mode == "sentence_length" else DISTANCE_EDGES
    edges = list(bucket_edges)
    if not edges:
        raise ValueError("bucket_edges must be non-empty")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bucket edges must be strictly increasing: {edges}")
    groups = [[] for _ in range(len(edges) + 1)]
    for r in records:
        value = r.length if mode == "sentence_length" else r.distance
        groups[int(np.searchsorted(edges, value, side="left"))].append(r)
    lows = [0] + [e + 1 for e in edges]
    highs = edges + [float("inf")]
    rows = []
    for lo, hi, g in zip(lows, highs, groups):
        gold = sum(r.gold != NONE_ID for r in g)
        rows.append(BucketRow(lo, hi, prf1(g, threshold), len(g), gold))
        if g and not gold:
            log.info("bucket [%s, %s] has %d records but no gold positives", lo, hi, len(g))
    return rows


# --------------------------------------------------------------------------
# record collection and file output
# --------------------------------------------------------------------------

def make_record(probs, enc) -> PredictionRecord:
    p = np.asarray(getattr(probs, "data", probs)).reshape(-1)
    top = int(np.argmax(p))
    return PredictionRecord(top, float(p[top]), int(enc.label_id), int(enc.n),
                            abs(int(enc.entity2[0]) - int(enc.entity1[0])))


def collect_records(encoded, params, hyper, workers: int = 1) -> list:
    """Eval-mode forward over every instance; order preserved."""
    from .network import forward

    def one(enc):
        return make_record(forward(enc, params, hyper, training=False), enc)

    if workers <= 1:
        return [one(e) for e in encoded]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, encoded))


def write_metrics_json(metrics: Metrics, threshold: float, path, config=None) -> None:
    out = asdict(metrics)
    out["threshold"] = threshold
    if config is not None:
        out["config"] = config
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_comment(fh, config) -> None:
    if config is not None:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")


def write_pr_csv(points, path, config=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _config_comment(fh, config)
        w = csv.writer(fh)
        w.writerow(["rank", "confidence", "precision", "recall"])
        for p in points:
            w.writerow([p.rank, repr(p.confidence), repr(p.precision), repr(p.recall)])


def write_bucket_csv(rows, path, config=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _config_comment(fh, config)
        w = csv.writer(fh)
        w.writerow(["bucket_low", "bucket_high", "tp", "fp", "fn", "precision", "recall", "f1"])
        for r in rows:
            m = r.metrics
            w.writerow([r.low, r.high, m.tp, m.fp, m.fn, repr(m.precision), repr(m.recall), repr(m.f1)])


def read_csv_rows(path) -> list:
    """Parse one of our CSV outputs, skipping the ``#`` config line."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
