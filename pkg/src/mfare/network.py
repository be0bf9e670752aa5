"""Bi-LSTM/CNN encoder with dependency-weighted multi-factor bilinear attention.

Feature vector fed to the softmax classifier::

    v_g || v_ma || v_e1 || v_e2

where ``v_g`` is the max-pooled CNN over Bi-LSTM states plus positional
embeddings, ``v_e*`` are max-pooled CNNs over each entity's context window,
and ``v_ma`` concatenates ``m`` attention vectors per entity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EncodedInstance, random_embeddings
from .deptree import attention_mask, dep_weights

ATTENTION_VARIANTS = ("none", "standard", "dep_weighted", "softmax_norm")
COMBINE_MODES = ("concat", "max_pool")


@dataclass(frozen=True)
class HyperParams:
    d_w: int = 50
    d_z: int = 10
    d_u: int = 5
    f_g: int = 230
    f_e: int = 230
    k: int = 3
    ws: int = 5
    m: int = 1
    dropout: float = 0.5
    max_pos: int = 50
    num_labels: int = 53
    vocab_size: int = 2
    attention_variant: str = "dep_weighted"
    combine_mode: str = "concat"
    context_window: int = 5
    share_entity_cnn: bool = True
    softmax_distance: bool = True   # softmax_norm variant keeps the distance factor
    zero_distance_weight: str = "one"  # "one" or "literal" (1/2**ws) for l == 0

    def __post_init__(self):
        for name in ("d_w", "d_z", "d_u", "f_g", "f_e", "k", "ws", "max_pos",
                     "num_labels", "vocab_size", "context_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.attention_variant not in ATTENTION_VARIANTS:
            raise ValueError(f"attention_variant must be one of {ATTENTION_VARIANTS}")
        if self.combine_mode not in COMBINE_MODES:
            raise ValueError(f"combine_mode must be one of {COMBINE_MODES}")
        if self.zero_distance_weight not in ("one", "literal"):
            raise ValueError("zero_distance_weight must be 'one' or 'literal'")

    @property
    def lstm_hidden(self) -> int:
        return self.d_w + self.d_z

    @property
    def uses_attention(self) -> bool:
        return self.attention_variant != "none" and self.m >= 1

    @property
    def v_ma_width(self) -> int:
        if not self.uses_attention:
            return 0
        factors = self.m if self.combine_mode == "concat" else 1
        return 4 * factors * self.lstm_hidden

    @property
    def classifier_width(self) -> int:
        return self.f_g + 2 * self.f_e + self.v_ma_width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyper-parameter(s): {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "HyperParams":
        return replace(self, **kw)


class ModelParams:
    """Named trainable tensors, in a fixed creation order."""

    def __init__(self, tensors: dict):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name) -> bool:
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> list:
        return list(self.tensors)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        return ModelParams({n: Tensor(t.data.copy(), requires_grad=True, name=n)
                            for n, t in self.tensors.items()})

    def shapes(self) -> dict:
        return {n: t.shape for n, t in self.tensors.items()}


def param_shapes(hyper: HyperParams) -> dict:
    """Name -> shape for every parameter the configuration needs."""
    h = hyper.lstm_hidden
    shapes = {
        "emb.word": (hyper.vocab_size, hyper.d_w),
        "emb.indicator": (3, hyper.d_z),
        "emb.pos1": (2 * hyper.max_pos + 1, hyper.d_u),
        "emb.pos2": (2 * hyper.max_pos + 1, hyper.d_u),
    }
    for d in ("fwd", "bwd"):
        shapes[f"lstm_{d}.W_in"] = (h, 4 * h)
        shapes[f"lstm_{d}.W_rec"] = (h, 4 * h)
        shapes[f"lstm_{d}.bias"] = (4 * h,)
    shapes["cnn_global.W"] = (hyper.k * (2 * h + 2 * hyper.d_u), hyper.f_g)
    shapes["cnn_global.b"] = (hyper.f_g,)
    banks = ("cnn_entity",) if hyper.share_entity_cnn else ("cnn_entity1", "cnn_entity2")
    for bank in banks:
        shapes[f"{bank}.W"] = (hyper.k * h, hyper.f_e)
        shapes[f"{bank}.b"] = (hyper.f_e,)
    if hyper.uses_attention:
        for f in range(hyper.m):
            shapes[f"attn.{f}.W1"] = (2 * h, hyper.f_e)
            shapes[f"attn.{f}.W2"] = (2 * h, hyper.f_e)
    shapes["clf.W"] = (hyper.classifier_width, hyper.num_labels)
    shapes["clf.b"] = (hyper.num_labels,)
    return shapes


def init_params(hyper: HyperParams, rng: np.random.Generator,
                embeddings=None) -> ModelParams:
    """Glorot-uniform matrices, zero biases, forget-gate bias 1.0."""
    tensors = {}
    h = hyper.lstm_hidden
    for name, shape in param_shapes(hyper).items():
        if name == "emb.word":
            if embeddings is not None:
                mat = np.asarray(getattr(embeddings, "matrix", embeddings), dtype=np.float64)
                if mat.shape != shape:
                    raise ValueError(f"embedding matrix shape {mat.shape} != expected {shape} "
                                     f"(vocab_size={hyper.vocab_size}, d_w={hyper.d_w})")
                data = mat.copy()
                data[0] = 0.0
            else:
                data = random_embeddings(shape[0], shape[1], rng)
        elif len(shape) == 1:
            data = np.zeros(shape)
            if name.endswith(".bias") and name.startswith("lstm_"):
                data[h:2 * h] = 1.0
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-limit, limit, size=shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ModelParams(tensors)


# --------------------------------------------------------------------------
# forward pieces
# --------------------------------------------------------------------------

def embed_tokens(enc: EncodedInstance, params: ModelParams) -> Tensor:
    """x_t = w_t || z_t, one row per token."""
    w = ad.gather_rows(params["emb.word"], enc.word_ids)
    z = ad.gather_rows(params["emb.indicator"], enc.indicator_ids)
    return ad.concat([w, z], axis=1)


def encode_sequence(enc: EncodedInstance, params: ModelParams, hyper: HyperParams,
                    training: bool = False, rng=None, x: Optional[Tensor] = None) -> Tensor:
    if x is None:
        x = embed_tokens(enc, params)
    fwd = ad.lstm_sequence(x, params["lstm_fwd.W_in"], params["lstm_fwd.W_rec"],
                           params["lstm_fwd.bias"], reverse=False)
    bwd = ad.lstm_sequence(x, params["lstm_bwd.W_in"], params["lstm_bwd.W_rec"],
                           params["lstm_bwd.bias"], reverse=True)
    H = ad.concat([fwd, bwd], axis=1)
    return ad.apply_dropout(H, hyper.dropout, rng, training)


def _conv_max(rows: Tensor, W: Tensor, b: Tensor, k: int) -> Tensor:
    windows = ad.unfold_windows(rows, k)
    scores = ad.tanh(ad.add_row(ad.matmul(windows, W), b))
    pooled, _ = ad.reduce_max(scores, axis=0)
    return pooled


def global_feature(H: Tensor, pos1_ids, pos2_ids, params: ModelParams,
                   hyper: HyperParams) -> Tensor:
    if H.shape[0] != len(pos1_ids) or H.shape[0] != len(pos2_ids):
        raise ValueError("positional id count does not match sequence length")
    u1 = ad.gather_rows(params["emb.pos1"], pos1_ids)
    u2 = ad.gather_rows(params["emb.pos2"], pos2_ids)
    q = ad.concat([H, u1, u2], axis=1)
    return _conv_max(q, params["cnn_global.W"], params["cnn_global.b"], hyper.k)


def entity_vector(enc: EncodedInstance, which: int, params: ModelParams,
                  hyper: HyperParams, x: Optional[Tensor] = None) -> Tensor:
    if x is None:
        x = embed_tokens(enc, params)
    b, e = enc.ent1_ctx if which == 1 else enc.ent2_ctx
    bank = "cnn_entity" if hyper.share_entity_cnn else f"cnn_entity{which}"
    ctx = ad.slice_rows(x, b, e + 1)
    return _conv_max(ctx, params[f"{bank}.W"], params[f"{bank}.b"], hyper.k)


def bilinear_scores(H: Tensor, v_e: Tensor, W_a: Tensor) -> Tensor:
    """s_i = h_i^T W_a v_e for every row of H."""
    if W_a.shape != (H.shape[1], v_e.shape[0]):
        raise ValueError(f"bilinear shape mismatch: H {H.shape}, W_a {W_a.shape}, v_e {v_e.shape}")
    wv = ad.matmul(W_a, ad.reshape(v_e, (v_e.shape[0], 1)))
    return ad.reshape(ad.matmul(H, wv), (H.shape[0],))


def attention_probs(s: Tensor, dist, keep, hyper: HyperParams) -> Tensor:
    """Normalised attention over kept tokens; masked tokens get exactly 0."""
    n = s.shape[0]
    dist = np.asarray(dist)
    keep = np.asarray(keep, dtype=bool)
    if dist.shape != (n,) or keep.shape != (n,):
        raise ValueError("scores, distances and mask must have equal lengths")
    variant = hyper.attention_variant
    if variant == "standard":
        keep = np.ones(n, dtype=bool)
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        raise ValueError("attention over an all-masked sequence")
    k = kept.size
    sk = s if k == n else ad.reshape(ad.gather_rows(ad.reshape(s, (n, 1)), kept), (k,))
    if variant == "standard":
        weights = np.ones(k)
    else:
        weights = dep_weights(dist[kept], hyper.ws, hyper.zero_distance_weight == "one")
    if variant == "softmax_norm":
        logits = sk
        if hyper.softmax_distance:
            logits = ad.add(sk, ad.const(np.log(weights)))
        pk = ad.reshape(ad.softmax_rows(ad.reshape(logits, (1, k))), (k,))
    else:
        shifted = ad.add(sk, ad.const(np.full(k, -sk.data.max())))
        pk = ad.normalize(ad.mul(ad.exp(shifted), ad.const(weights)))
    if k == n:
        return pk
    select = np.zeros((k, n))
    select[np.arange(k), kept] = 1.0
    return ad.reshape(ad.matmul(ad.reshape(pk, (1, k)), ad.const(select)), (n,))


def attention_vector(H: Tensor, p: Tensor) -> Tensor:
    n = H.shape[0]
    if p.shape != (n,):
        raise ValueError(f"attention length {p.shape} != sequence length {n}")
    return ad.reshape(ad.matmul(ad.reshape(p, (1, n)), H), (H.shape[1],))


def token_mask(enc: EncodedInstance, hyper: HyperParams) -> np.ndarray:
    if hyper.attention_variant == "standard":
        return np.ones(enc.n, dtype=bool)
    return attention_mask(enc.dep_dist1, enc.dep_dist2, hyper.ws,
                          fallback_spans=(enc.entity1, enc.entity2))


def multi_factor_features(H: Tensor, enc: EncodedInstance, v_e1: Tensor, v_e2: Tensor,
                          params: ModelParams, hyper: HyperParams) -> Tensor:
    if not hyper.uses_attention:
        raise ValueError("multi-factor attention needs m >= 1 and an attention variant")
    keep = token_mask(enc, hyper)
    ents = ((1, v_e1, enc.dep_dist1), (2, v_e2, enc.dep_dist2))
    probs = {1: [], 2: []}
    for f in range(hyper.m):
        for which, v_e, dist in ents:
            s = bilinear_scores(H, v_e, params[f"attn.{f}.W{which}"])
            probs[which].append(attention_probs(s, dist, keep, hyper))
    if hyper.combine_mode == "concat":
        vecs = [attention_vector(H, probs[which][f])
                for f in range(hyper.m) for which in (1, 2)]
        return ad.concat(vecs, axis=0)
    n = H.shape[0]
    vecs = []
    for which in (1, 2):
        stacked = ad.concat([ad.reshape(p, (1, n)) for p in probs[which]], axis=0)
        pooled, _ = ad.reduce_max(stacked, axis=0)
        vecs.append(attention_vector(H, ad.normalize(pooled)))
    return ad.concat(vecs, axis=0)


def forward(enc: EncodedInstance, params: ModelParams, hyper: HyperParams,
            training: bool = False, rng=None) -> Tensor:
    """Relation-label distribution for one instance."""
    x = embed_tokens(enc, params)
    H = encode_sequence(enc, params, hyper, training, rng, x=x)
    v_g = global_feature(H, enc.pos1_ids, enc.pos2_ids, params, hyper)
    v_e1 = entity_vector(enc, 1, params, hyper, x=x)
    v_e2 = entity_vector(enc, 2, params, hyper, x=x)
    parts = [v_g]
    if hyper.uses_attention:
        parts.append(multi_factor_features(H, enc, v_e1, v_e2, params, hyper))
    parts += [v_e1, v_e2]
    feat = ad.apply_dropout(ad.concat(parts, axis=0), hyper.dropout, rng, training)
    width = feat.shape[0]
    logits = ad.matmul(ad.reshape(feat, (1, width)), params["clf.W"])
    logits = ad.add_row(logits, params["clf.b"])
    return ad.reshape(ad.softmax_rows(logits), (hyper.num_labels,))


def nll_batch(batch, params: ModelParams, hyper: HyperParams, rng) -> Tensor:
    """Mean negative log-likelihood of the gold labels, in training mode."""
    if not batch:
        raise ValueError("empty batch")
    losses = [ad.reshape(ad.nll(forward(enc, params, hyper, True, rng), enc.label_id), (1,))
              for enc in batch]
    total = ad.sum_all(ad.concat(losses, axis=0)) if len(losses) > 1 else ad.reshape(losses[0], ())
    return ad.scale(total, 1.0 / len(batch))
