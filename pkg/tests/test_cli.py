import io
import json

import pytest

from mfare.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main, random_instance, run_gradcheck
from mfare.config import ConfigError, RunConfig, parse_config_text

FAST = ["--set", "d_w=6", "--set", "d_z=2", "--set", "f_g=8", "--set", "f_e=6",
        "--set", "max_epochs=2", "--set", "batch_size=10"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--seed", "3", "--splits", "40,20,20", "--out-dir", str(root)]) == EXIT_OK
    ckpt = root / "model" / "m.ckpt"
    assert main(["train", "--train", str(root / "train.jsonl"), "--dev", str(root / "dev.jsonl"),
                 "--checkpoint", str(ckpt), *FAST]) == EXIT_OK
    return root, ckpt


def test_train_outputs(trained):
    root, ckpt = trained
    assert ckpt.exists()
    history = (root / "model" / "history.csv").read_text().splitlines()
    assert history[0].startswith("# config: ") and history[1].startswith("epoch,")
    assert json.loads(history[0][len("# config: "):])["d_w"] == 6


def test_eval_outputs(trained, capsys):
    root, ckpt = trained
    out = root / "eval"
    assert main(["eval", "--checkpoint", str(ckpt), "--test", str(root / "test.jsonl"),
                 "--out-dir", str(out), "--workers", "2"]) == EXIT_OK
    for name in ("metrics.json", "pr_curve.csv", "buckets_length.csv", "buckets_distance.csv"):
        assert (out / name).exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["config"]["d_w"] == 6 and 0.0 <= metrics["f1"] <= 1.0
    assert main(["eval", "--checkpoint", str(ckpt), "--test", str(root / "test.jsonl"),
                 "--out-dir", str(out), "--threshold", "0.99"]) == EXIT_OK
    assert json.loads((out / "metrics.json").read_text())["threshold"] == 0.99


def test_predict_order_and_lenient(trained, tmp_path, capsys):
    root, ckpt = trained
    lines = (root / "test.jsonl").read_text().splitlines()[:3]
    src = tmp_path / "in.jsonl"
    src.write_text("\n".join([lines[0], "{broken", lines[1], lines[2]]) + "\n")
    assert main(["predict", "--checkpoint", str(ckpt), str(src)]) == EXIT_USAGE
    assert "line 2" in capsys.readouterr().err
    out = tmp_path / "out.jsonl"
    assert main(["predict", "--lenient", "--checkpoint", str(ckpt), str(src), "-o", str(out)]) == EXIT_OK
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(rows) == 4 and rows[1]["line"] == 2 and "error" in rows[1]
    assert all(set(r) == {"relation", "confidence"} for i, r in enumerate(rows) if i != 1)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["predict", "--checkpoint", str(ckpt), str(empty), "-o", str(out)]) == EXIT_OK
    assert out.read_text() == ""


def test_missing_paths(tmp_path, capsys):
    assert main(["train", "--train", str(tmp_path / "nope.jsonl"), "--dev", "x"]) == EXIT_USAGE
    assert "nope.jsonl" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(tmp_path / "c.ckpt")]) == EXIT_USAGE


def test_unknown_set_key(capsys):
    assert main(["gradcheck", "--set", "colour=red"]) == EXIT_USAGE
    assert "colour" in capsys.readouterr().err


def test_corrupt_checkpoint_is_usage_error(trained, tmp_path, capsys):
    root, ckpt = trained
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(ckpt.read_bytes()[:100])
    assert main(["eval", "--checkpoint", str(bad), "--test", str(root / "test.jsonl")]) == EXIT_USAGE
    assert "truncated" in capsys.readouterr().err


def test_gradcheck_command_passes(capsys):
    assert main(["gradcheck", "--seed", "4", "--set", "f_g=20", "--set", "f_e=12"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[") == 8 and "PASS" in out


def test_gradcheck_names_failing_parameter(monkeypatch, capsys):
    import mfare.autodiff as ad
    real = ad.finite_difference_check

    def skewed(f, params, **kw):
        report = real(f, params, **kw)
        report.errors["clf.b"] = 1.0
        return report

    monkeypatch.setattr("mfare.cli.finite_difference_check", skewed)
    assert main(["gradcheck", "--set", "f_g=8", "--set", "f_e=6"]) == EXIT_VERIFY
    assert "clf.b" in capsys.readouterr().out


def test_random_instance_is_valid():
    import numpy as np
    for seed in range(20):
        inst = random_instance(np.random.default_rng(seed))
        assert inst.n == 8


def test_run_gradcheck_reports_all_combos():
    ok, results = run_gradcheck(RunConfig({"f_g": 8, "f_e": 6}), seed=1, out=io.StringIO())
    assert ok and len(results) == 8


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nm = 3\ncombine_mode = max_pool  # trailing\nshare_entity_cnn = false\n")
    cfg = RunConfig.from_file(path)
    hyper = cfg.hyper(10, 4)
    assert hyper.m == 3 and hyper.combine_mode == "max_pool" and not hyper.share_entity_cnn
    assert "train" not in cfg.effective() and cfg.effective()["m"] == 3
    with pytest.raises(ConfigError, match="unknown"):
        parse_config_text("bogus = 1")
    with pytest.raises(ConfigError, match="invalid value"):
        RunConfig({"m": "three"})
    with pytest.raises(ConfigError, match="expected"):
        parse_config_text("m 3")


def test_synth_usage_errors(tmp_path):
    assert main(["synth", "--size", "0", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert main(["synth", "--splits", "1,2"]) == EXIT_USAGE
    assert main(["synth", "--seed", "1", "--size", "5", "--out", str(tmp_path / "s.jsonl")]) == EXIT_OK
    assert len((tmp_path / "s.jsonl").read_text().splitlines()) == 5
