"""Command-line entry point: ``mfare {train,eval,predict,gradcheck,synth}``.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .autodiff import finite_difference_check
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig
from .corpus import (CorpusError, Instance, Vocab, build_vocab, encode, instance_from_obj,
                     load_corpus, load_word2vec_text)
from .evaluator import (bucket_report, collect_records, pr_curve, predict, prf1,
                        write_bucket_csv, write_metrics_json, write_pr_csv)
from .network import ATTENTION_VARIANTS, COMBINE_MODES, forward, init_params, nll_batch
from .synth import generate, generate_splits, write_corpus
from .trainer import fit, write_history_csv

log = logging.getLogger("mfare")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


def _require_file(path: str, what: str) -> Path:
    if not path:
        raise UsageError(f"no {what} path given")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p


def _encode_all(instances, vocab, hyper):
    return [encode(i, vocab, hyper.max_pos, hyper.context_window) for i in instances]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    train_path = _require_file(cfg["train"], "train")
    dev_path = _require_file(cfg["dev"], "dev")
    if not cfg["checkpoint"]:
        raise UsageError("no checkpoint path given")
    lenient = cfg["lenient"]
    train = load_corpus(train_path, lenient).instances
    dev = load_corpus(dev_path, lenient).instances
    if not train or not dev:
        raise UsageError("train and dev sets must be non-empty")
    vocab = build_vocab(train, cfg["min_count"])
    hyper = cfg.hyper(len(vocab), vocab.num_labels)
    embeddings = None
    if cfg["embeddings"]:
        table = load_word2vec_text(_require_file(cfg["embeddings"], "embeddings"), vocab,
                                   hyper.d_w, np.random.default_rng([cfg["seed"], 2]))
        log.info("embedding coverage %.3f", table.coverage)
        embeddings = table.matrix
    config = cfg.train_config()
    effective = cfg.effective()

    def extra(threshold):
        return {"vocab": vocab.to_json(), "threshold": threshold, "config": effective}

    result = fit(_encode_all(train, vocab, hyper), _encode_all(dev, vocab, hyper),
                 config, hyper, embeddings=embeddings, checkpoint_extra=extra)
    history = cfg["history"] or str(Path(cfg["checkpoint"]).with_name("history.csv"))
    write_history_csv(result.history, history, effective)
    print(json.dumps({"best_epoch": result.best_epoch, "dev_f1": result.dev_f1,
                      "threshold": result.threshold, "epochs": len(result.history),
                      "checkpoint": cfg["checkpoint"], "history": history}))
    return EXIT_OK


def _load_model(path):
    params, hyper, header = load_checkpoint(_require_file(path, "checkpoint"))
    if "vocab" not in header:
        raise CheckpointError("checkpoint header has no vocabulary")
    return params, hyper, header, Vocab.from_json(header["vocab"])


def cmd_eval(cfg: RunConfig) -> int:
    params, hyper, header, vocab = _load_model(cfg["checkpoint"])
    test = load_corpus(_require_file(cfg["test"], "test"), cfg["lenient"]).instances
    unseen = sorted({i.relation for i in test} - set(vocab.labels))
    if unseen:
        log.warning("labels absent from the checkpoint vocabulary count as unmatched "
                    "gold positives: %s", ", ".join(unseen))
    encoded = _encode_all(test, vocab, hyper)
    records = collect_records(encoded, params, hyper, workers=cfg["workers"])
    threshold = cfg["threshold"] if cfg["threshold"] >= 0 else float(header.get("threshold", 0.0))
    metrics = prf1(records, threshold) if records else prf1([], threshold)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    echo = dict(header.get("config", {}), threshold=threshold)
    write_metrics_json(metrics, threshold, out / "metrics.json", echo)
    write_pr_csv(pr_curve(records), out / "pr_curve.csv", echo)
    write_bucket_csv(bucket_report(records, "sentence_length", threshold=threshold),
                     out / "buckets_length.csv", echo)
    write_bucket_csv(bucket_report(records, "entity_distance", threshold=threshold),
                     out / "buckets_distance.csv", echo)
    print((out / "metrics.json").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, input_path: str, output_path: str = "") -> int:
    params, hyper, header, vocab = _load_model(cfg["checkpoint"])
    threshold = cfg["threshold"] if cfg["threshold"] >= 0 else float(header.get("threshold", 0.0))
    src = _require_file(input_path, "input")
    lines = []
    with open(src, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                inst = instance_from_obj(json.loads(raw), require_relation=False)
            except (CorpusError, json.JSONDecodeError) as exc:
                if not cfg["lenient"]:
                    raise CorpusError(str(exc), lineno) from None
                log.warning("line %d: %s", lineno, exc)
                lines.append({"line": lineno, "error": str(exc)})
                continue
            probs = forward(encode(inst, vocab, hyper.max_pos, hyper.context_window),
                            params, hyper).data
            label = predict(probs, threshold)
            lines.append({"relation": vocab.id_to_label[label],
                          "confidence": float(probs.max())})
    text = "".join(json.dumps(o) + "\n" for o in lines)
    if output_path:
        Path(output_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def random_instance(rng: np.random.Generator, n: int = 8, num_labels: int = 5) -> Instance:
    """A random valid instance over tokens ``t0..t{n-1}`` with a random tree."""
    order = rng.permutation(n)
    heads = [-1] * n
    for pos in range(1, n):
        heads[order[pos]] = int(order[rng.integers(pos)])
    a, b = sorted(rng.choice(n, 2, replace=False))
    e1 = (int(a), int(a + rng.integers(0, max(1, min(2, b - a)))))
    e2 = (int(b), int(b))
    label = f"r{rng.integers(1, num_labels)}"
    return Instance(tuple(f"t{i}" for i in range(n)), e1, e2, tuple(heads), label)


def run_gradcheck(cfg: RunConfig, seed: int, out=None) -> tuple[bool, dict]:
    out = out or sys.stdout
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    fillers = [Instance(inst.tokens, inst.entity1, inst.entity2, inst.dep_heads, f"r{k}")
               for k in range(1, 5)]
    vocab = build_vocab([inst] + fillers)
    ok = True
    results = {}
    for variant in ATTENTION_VARIANTS:
        for combine in COMBINE_MODES:
            sub = RunConfig(dict(cfg.values, attention_variant=variant, combine_mode=combine))
            hyper = sub.hyper(len(vocab), vocab.num_labels)
            enc = encode(inst, vocab, hyper.max_pos, hyper.context_window)
            params = init_params(hyper, np.random.default_rng([seed, 1]))

            def loss(_ps, enc=enc, params=params, hyper=hyper):
                return nll_batch([enc], params, hyper, np.random.default_rng([seed, 3]))

            report = finite_difference_check(loss, params.tensors, eps=1e-5, seed=seed)
            tag = f"{variant}/{combine}"
            results[tag] = report
            print(f"[{tag}]", file=out)
            for name, err in report.errors.items():
                flag = "ok" if err < GRADCHECK_TOL else "FAIL"
                print(f"  {name:<20s} {err:.3e} {flag}", file=out)
            if not report.passed(GRADCHECK_TOL):
                ok = False
                name, err = report.worst()
                print(f"  gradient check failed for {tag}: {name} rel. err {err:.3e}", file=out)
    return ok, results


def cmd_gradcheck(cfg: RunConfig) -> int:
    start = time.perf_counter()
    ok, _ = run_gradcheck(cfg, cfg["seed"])
    print(f"backend={kernels.BACKEND} elapsed={time.perf_counter() - start:.1f}s "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_synth(seed: int, size: int, out_path: str = "", splits: str = "", out_dir: str = "") -> int:
    if splits:
        try:
            sizes = [int(s) for s in splits.split(",")]
        except ValueError:
            raise UsageError(f"--splits expects comma-separated sizes, got {splits!r}") from None
        if len(sizes) != 3 or min(sizes) < 1:
            raise UsageError("--splits needs three positive sizes: train,dev,test")
        target = Path(out_dir or ".")
        target.mkdir(parents=True, exist_ok=True)
        for name, data in zip(("train", "dev", "test"), generate_splits(seed, sizes)):
            write_corpus(data, target / f"{name}.jsonl")
        return EXIT_OK
    if size < 1:
        raise UsageError("--size must be >= 1")
    if not out_path:
        raise UsageError("synth needs --out or --splits")
    write_corpus(generate(seed, size), out_path)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=float, help="override the stored confidence threshold")
    common.add_argument("--workers", type=int, help="threads for evaluation forward passes")
    common.add_argument("--lenient", action="store_true", help="skip malformed input lines")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mfare", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--embeddings")
    p.add_argument("--checkpoint")
    p.add_argument("--history")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--test")
    p.add_argument("--out-dir")

    p = sub.add_parser("predict", parents=[common], help="label instances from a JSONL file")
    p.add_argument("--checkpoint")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="")

    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the full loss")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--size", type=int, default=0)
    p.add_argument("--out", default="")
    p.add_argument("--splits", default="", help="train,dev,test sizes, e.g. 400,100,100")
    p.add_argument("--out-dir", default="")
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    for key in ("seed", "threshold", "workers"):
        if getattr(args, key, None) is not None:
            cfg.set(key, getattr(args, key))
    if args.lenient:
        cfg.set("lenient", True)
    for key in ("train", "dev", "test", "embeddings", "checkpoint", "history", "out_dir"):
        value = getattr(args, key, None)
        if value:
            cfg.set(key, value)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.input, args.output)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        return cmd_synth(cfg["seed"], args.size, args.out, args.splits, args.out_dir)
    except (UsageError, ConfigError, CorpusError, CheckpointError, OSError, ValueError) as exc:
        print(f"mfare {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
