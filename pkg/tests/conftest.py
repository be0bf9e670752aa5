import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfare.corpus import Instance, build_vocab, encode  # noqa: E402
from mfare.network import HyperParams  # noqa: E402
from oracles import random_heads  # noqa: E402


def random_instance(rng, n=None, label="r1"):
    n = n or int(rng.integers(4, 12))
    a, b = sorted(rng.choice(n, 2, replace=False))
    end1 = int(a + rng.integers(0, max(1, b - a)))
    return Instance(tuple(f"w{rng.integers(6)}" for _ in range(n)), (int(a), end1),
                    (int(b), int(b)), tuple(random_heads(rng, n)), label)


def small_hyper(**kw):
    base = dict(d_w=4, d_z=2, d_u=2, f_g=5, f_e=4, k=3, ws=2, m=1, dropout=0.0,
                max_pos=6, num_labels=3, vocab_size=8, context_window=2)
    base.update(kw)
    return HyperParams(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_encoded(rng):
    insts = [random_instance(rng, label=("None", "r1", "r2")[i % 3]) for i in range(6)]
    vocab = build_vocab(insts)
    hyper = small_hyper(vocab_size=len(vocab), num_labels=vocab.num_labels)
    return [encode(i, vocab, hyper.max_pos, hyper.context_window) for i in insts], vocab, hyper
