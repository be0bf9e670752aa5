"""Mini-batch Adagrad training with dev-F1 early stopping."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import Tape, backward
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401  (re-exported)
from .evaluator import collect_records, prf1, tune_threshold
from .network import HyperParams, ModelParams, init_params, nll_batch

log = logging.getLogger(__name__)

FROZEN_ROWS = {"emb.word": (0,)}   # PAD embedding stays zero


@dataclass
class TrainConfig:
    batch_size: int = 50
    max_epochs: int = 100
    patience: int = 5
    lr: float = 0.01
    eps: float = 1e-8
    seed: int = 1
    checkpoint: Optional[str] = None
    max_grad_norm: float = 0.0     # 0 disables clipping

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


class AdagradState:
    def __init__(self, params: ModelParams, lr: float = 0.01, eps: float = 1e-8):
        self.lr = lr
        self.eps = eps
        self.acc = {name: np.zeros_like(t.data) for name, t in params.items()}


def adagrad_update(params: ModelParams, grads: dict, state: AdagradState) -> None:
    """acc += g**2; theta -= lr * g / (sqrt(acc) + eps); then zero the grads."""
    for name, t in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != t.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {t.shape} for {name}")
        acc = state.acc[name]
        acc += g * g
        t.data -= state.lr * g / (np.sqrt(acc) + state.eps)
    params.zero_grad()


def _gradients(params: ModelParams, max_norm: float = 0.0) -> dict:
    grads = {}
    for name, t in params.items():
        if t._grad is None:
            continue
        g = t._grad
        for row in FROZEN_ROWS.get(name, ()):
            g[row] = 0.0
        grads[name] = g
    if max_norm > 0:
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if norm > max_norm:
            for g in grads.values():
                g *= max_norm / norm
    return grads


def batches(n: int, batch_size: int, rng: np.random.Generator) -> list:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_epoch(train_set, params: ModelParams, state: AdagradState, hyper: HyperParams,
                rng: np.random.Generator, batch_size: int = 50,
                dropout_rng: Optional[np.random.Generator] = None,
                max_grad_norm: float = 0.0) -> float:
    """One shuffled pass; returns the instance-weighted mean loss."""
    if not train_set:
        raise ValueError("empty training set")
    dropout_rng = dropout_rng if dropout_rng is not None else rng
    total = 0.0
    for idx in batches(len(train_set), batch_size, rng):
        batch = [train_set[i] for i in idx]
        params.zero_grad()
        with Tape():
            loss = nll_batch(batch, params, hyper, dropout_rng)
            backward(loss)
        total += loss.item() * len(batch)
        adagrad_update(params, _gradients(params, max_grad_norm), state)
    return total / len(train_set)


class EarlyStopper:
    """Tracks the best dev F1; signals a stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -1.0
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, f1: float) -> bool:
        if f1 > self.best:
            self.best, self.best_epoch, self.bad_epochs = f1, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class EpochStats:
    epoch: int
    loss: float
    dev_p: float
    dev_r: float
    dev_f1: float
    threshold: float


@dataclass
class FitResult:
    params: ModelParams
    history: list = field(default_factory=list)
    best_epoch: int = 0
    threshold: float = 0.0
    dev_f1: float = 0.0


def evaluate_dev(dev_set, params: ModelParams, hyper: HyperParams):
    records = collect_records(dev_set, params, hyper)
    threshold = tune_threshold(records)
    return prf1(records, threshold), threshold


def fit(train_set, dev_set, config: TrainConfig, hyper: HyperParams,
        params: Optional[ModelParams] = None, embeddings=None,
        checkpoint_extra: Optional[Callable[[float], dict]] = None,
        dev_eval=evaluate_dev) -> FitResult:
    """Train until ``patience`` epochs pass without a dev-F1 gain or ``max_epochs``.

    Returns the parameters of the best epoch. When ``config.checkpoint`` is
    set, the best model is written there each time it improves;
    ``checkpoint_extra(threshold)`` supplies extra header fields.
    """
    if not train_set or not dev_set:
        raise ValueError("fit needs non-empty train and dev sets")
    if params is None:
        params = init_params(hyper, np.random.default_rng(config.seed), embeddings)
    state = AdagradState(params, config.lr, config.eps)
    dropout_rng = np.random.default_rng([config.seed, 1])
    stopper = EarlyStopper(config.patience)
    result = FitResult(params)
    best = None
    for epoch in range(1, config.max_epochs + 1):
        shuffle_rng = np.random.default_rng([config.seed, 0, epoch])
        loss = train_epoch(train_set, params, state, hyper, shuffle_rng, config.batch_size,
                           dropout_rng, config.max_grad_norm)
        metrics, threshold = dev_eval(dev_set, params, hyper)
        result.history.append(EpochStats(epoch, loss, metrics.precision, metrics.recall,
                                         metrics.f1, threshold))
        log.info("epoch %d loss %.4f dev P %.3f R %.3f F1 %.3f (threshold %.3f)",
                 epoch, loss, metrics.precision, metrics.recall, metrics.f1, threshold)
        stop = stopper.update(epoch, metrics.f1)
        if stopper.best_epoch == epoch:
            best = params.copy()
            result.threshold, result.dev_f1 = threshold, metrics.f1
            if config.checkpoint:
                extra = checkpoint_extra(threshold) if checkpoint_extra else {}
                save_checkpoint(best, hyper, config.checkpoint, extra)
        if stop:
            break
    result.params = best
    result.best_epoch = stopper.best_epoch
    return result


def write_history_csv(history, path, config=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "dev_p", "dev_r", "dev_f1", "threshold"])
        for h in history:
            w.writerow([h.epoch, repr(h.loss), repr(h.dev_p), repr(h.dev_r),
                        repr(h.dev_f1), repr(h.threshold)])
