"""Acceptance criteria 1-9. Each test prints one ``criterion N: PASS|FAIL`` line."""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from mfare.autodiff import Tensor
from mfare.cli import main
from mfare.corpus import build_vocab, encode, load_corpus
from mfare.deptree import DepTree, token_distances
from mfare.evaluator import PredictionRecord, prf1, threshold_monotonicity_check, tune_threshold
from mfare.network import HyperParams, attention_probs, param_shapes
from mfare.trainer import TrainConfig, fit
from oracles import best_threshold, confusion, floyd_warshall, random_heads


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return emit


def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "mfare", *args], cwd=cwd,
                          capture_output=True, text=True)


def test_criterion_1_gradient_suite(report, capsys):
    start = time.perf_counter()
    code = main(["gradcheck", "--seed", "0"])
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    combos = out.count("[")
    report(1, code == 0 and combos == 8 and elapsed < 60,
           f"8 combos checked={combos}, exit={code}, {elapsed:.1f}s")


def test_criterion_2_attention_invariants(report):
    rng = np.random.default_rng(2024)
    hyper = HyperParams()
    ws = hyper.ws
    bad = []
    for trial in range(1000):
        n = int(rng.integers(2, 20))
        s = rng.integers(-2**22, 2**22, size=n) / 2.0**20   # dyadic, so shifts are exact
        dist = rng.integers(1, ws + 4, size=n)
        keep = rng.random(n) < 0.7
        a, b = rng.choice(n, 2, replace=False)
        dist[a], dist[b] = rng.integers(1, ws + 1, size=2)
        keep[a] = keep[b] = True
        s[b] = s[a]
        p = attention_probs(Tensor(s), dist, keep, hyper).data
        shift = float(rng.integers(-1000, 1000))
        p_shift = attention_probs(Tensor(s + shift), dist, keep, hyper).data
        checks = {
            "sum": abs(p.sum() - 1.0) <= 1e-9,
            "masked": np.all(p[~keep] == 0.0),
            "ratio": abs(p[a] / p[b] - 2.0 ** (dist[b] - dist[a])) <= 1e-9,
            "shift": np.array_equal(p, p_shift),
        }
        bad += [(trial, k) for k, ok in checks.items() if not ok]
    report(2, not bad, f"1000 triples, violations={bad[:5]}")


def test_criterion_3_distance_oracle(report):
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(500):
        n = int(rng.integers(1, 13))
        heads = random_heads(rng, n)
        tree = DepTree(heads)
        oracle = floyd_warshall(heads)
        mismatches += sum(token_distances(tree, s).tolist() != oracle[s] for s in range(n))
    report(3, mismatches == 0, f"500 trees, mismatching rows={mismatches}")


def test_criterion_4_dimension_ledger(report):
    h1, h4 = HyperParams(m=1), HyperParams(m=4)
    got = (h1.classifier_width, h4.classifier_width, h1.v_ma_width, h4.v_ma_width,
           param_shapes(h1)["clf.W"][0], param_shapes(h4)["clf.W"][0])
    report(4, got == (930, 1650, 240, 960, 930, 1650), f"widths={got}")


def _records(rng):
    n = int(rng.integers(1, 51))
    k = int(rng.integers(2, 6))
    conf = rng.integers(1, 8, size=n) / 7 if rng.random() < 0.5 else rng.uniform(1 / k, 1, size=n)
    return [PredictionRecord(int(rng.integers(k)), float(c), int(rng.integers(k))) for c in conf]


def test_criterion_5_metrics_oracle(report):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(200):
        recs = _records(rng)
        t = float(rng.uniform(0, 1))
        m = prf1(recs, t)
        bad += (m.tp, m.fp, m.fn) != confusion(recs, t)
    ex = [PredictionRecord(1, 0.9, 1), PredictionRecord(2, 0.9, 2), PredictionRecord(1, 0.9, 2),
          PredictionRecord(0, 0.9, 3)]
    m = prf1(ex)
    worked = (m.precision, m.recall, m.f1) == (2 / 3, 1 / 2, 4 / 7)
    report(5, bad == 0 and worked, f"oracle mismatches={bad}, worked example P/R/F1={m.precision:.4f}/"
                                    f"{m.recall:.4f}/{m.f1:.4f}")


def test_criterion_6_threshold_protocol(report):
    rng = np.random.default_rng(6)
    wrong = sum(tune_threshold(r) != best_threshold(r)[0] for r in (_records(rng) for _ in range(200)))
    mono = sum(not threshold_monotonicity_check(_records(rng)).ok for _ in range(100))
    report(6, wrong == 0 and mono == 0, f"tuning mismatches={wrong}, monotonicity failures={mono}")


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    """Criterion 7 pipeline, run twice from scratch in separate directories."""
    runs = []
    for tag in ("a", "b"):
        root = tmp_path_factory.mktemp(f"desk_{tag}")
        start = time.perf_counter()
        steps = [
            cli("synth", "--seed", "7", "--splits", "400,100,100", "--out-dir", "data", cwd=root),
            cli("train", "--train", "data/train.jsonl", "--dev", "data/dev.jsonl",
                "--checkpoint", "model/model.ckpt", cwd=root),
            cli("eval", "--checkpoint", "model/model.ckpt", "--test", "data/train.jsonl",
                "--out-dir", "eval_train", cwd=root),
            cli("eval", "--checkpoint", "model/model.ckpt", "--test", "data/test.jsonl",
                "--out-dir", "eval_test", cwd=root),
        ]
        runs.append((root, steps, time.perf_counter() - start))
    return runs


@pytest.mark.slow
def test_criterion_7_end_to_end(report, desk_runs):
    root, steps, elapsed = desk_runs[0]
    failed = [s.args[3] for s in steps if s.returncode != 0]
    if failed:
        report(7, False, f"commands failed: {failed}: {steps[-1].stderr[-300:]}")
    f1_train = json.loads((root / "eval_train" / "metrics.json").read_text())["f1"]
    f1_test = json.loads((root / "eval_test" / "metrics.json").read_text())["f1"]
    report(7, f1_train >= 0.95 and f1_test >= 0.80 and elapsed < 600,
           f"train F1={f1_train:.4f}, test F1={f1_test:.4f}, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_8_m_sweep(report, tmp_path):
    assert main(["synth", "--seed", "7", "--splits", "400,100,100", "--out-dir", str(tmp_path)]) == 0
    train = load_corpus(tmp_path / "train.jsonl").instances
    dev = load_corpus(tmp_path / "dev.jsonl").instances
    vocab = build_vocab(train)
    rows = []
    ok = True
    for m in range(1, 6):
        hyper = HyperParams(m=m, vocab_size=len(vocab), num_labels=vocab.num_labels)
        tr = [encode(i, vocab) for i in train]
        dv = [encode(i, vocab) for i in dev]
        result = fit(tr, dv, TrainConfig(max_epochs=2, seed=1), hyper)
        dims_ok = (hyper.v_ma_width == 240 * m and hyper.classifier_width == 690 + 240 * m
                   and result.params["clf.W"].shape[0] == hyper.classifier_width)
        ok &= dims_ok and len(result.history) == 2
        rows.append(f"m={m}:width={hyper.classifier_width},dev_f1={result.dev_f1:.3f}")
    report(8, ok, "; ".join(rows))


@pytest.mark.slow
def test_criterion_9_determinism(report, desk_runs):
    (a, _, _), (b, _, _) = desk_runs
    same_ckpt = (a / "model" / "model.ckpt").read_bytes() == (b / "model" / "model.ckpt").read_bytes()
    same_metrics = all((a / d / "metrics.json").read_bytes() == (b / d / "metrics.json").read_bytes()
                       for d in ("eval_train", "eval_test"))
    report(9, same_ckpt and same_metrics,
           f"checkpoint identical={same_ckpt}, metrics identical={same_metrics}")
