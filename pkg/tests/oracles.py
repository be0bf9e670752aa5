"""Deliberately naive reference implementations used as test oracles."""

import math
from fractions import Fraction

import numpy as np

INF = float("inf")


def random_heads(rng, n):
    """Uniform-ish random tree: each token after the first picks an earlier one in a shuffled order."""
    order = rng.permutation(n)
    heads = [-1] * n
    for pos in range(1, n):
        heads[order[pos]] = int(order[rng.integers(pos)])
    return heads


def floyd_warshall(heads):
    n = len(heads)
    d = [[0 if i == j else INF for j in range(n)] for i in range(n)]
    for i, h in enumerate(heads):
        if h >= 0:
            d[i][h] = d[h][i] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    return d


def confusion(records, threshold):
    """Per-pair counting with the thresholding rule spelled out inline."""
    tp = fp = fn = 0
    for r in records:
        final = r.pred
        if final != 0 and r.confidence < threshold:
            final = 0
        if final != 0 and final == r.gold:
            tp += 1
        if final != 0 and final != r.gold:
            fp += 1
        if r.gold != 0 and final != r.gold:
            fn += 1
    return tp, fp, fn


def f1_from(tp, fp, fn):
    """Exact harmonic mean of precision and recall, as a Fraction."""
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    return 2 * p * r / (p + r) if p + r else Fraction(0)


def best_threshold(records):
    """Try every candidate; return the smallest one achieving the maximum F1."""
    cands = sorted({0.0} | {r.confidence for r in records})
    scored = [(f1_from(*confusion(records, t)), t) for t in cands]
    top = max(s for s, _ in scored)
    return min(t for s, t in scored if s == top), top


def lstm_scalar(xw, w_rec, reverse=False):
    """Scalar-loop LSTM over pre-projected inputs; gate order i, f, g, o."""
    n, four_h = xw.shape
    h_dim = four_h // 4
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))  # noqa: E731
    h_prev = [0.0] * h_dim
    c_prev = [0.0] * h_dim
    H = np.zeros((n, h_dim))
    C = np.zeros((n, h_dim))
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        z = [xw[t, j] + sum(h_prev[a] * w_rec[a, j] for a in range(h_dim)) for j in range(four_h)]
        for u in range(h_dim):
            i = sig(z[u])
            f = sig(z[h_dim + u])
            g = math.tanh(z[2 * h_dim + u])
            o = sig(z[3 * h_dim + u])
            C[t, u] = f * c_prev[u] + i * g
            H[t, u] = o * math.tanh(C[t, u])
        h_prev, c_prev = list(H[t]), list(C[t])
    return H, C
