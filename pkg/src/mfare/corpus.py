"""Instance ingestion, vocabularies, word2vec loading and index encoding."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .deptree import DepTree, TreeError, entity_head_index, token_distances

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
NONE_LABEL = "None"
INDICATOR_NONE, INDICATOR_E1, INDICATOR_E2 = 0, 1, 2
CONTEXT_WINDOW = 5
MAX_POS = 50
INIT_RANGE = 0.25


class CorpusError(ValueError):
    """Malformed instance or input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Instance:
    tokens: tuple
    entity1: tuple          # (start, end), inclusive
    entity2: tuple
    dep_heads: tuple
    relation: Optional[str] = NONE_LABEL

    @property
    def n(self) -> int:
        return len(self.tokens)

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "entity1": {"start": self.entity1[0], "end": self.entity1[1]},
            "entity2": {"start": self.entity2[0], "end": self.entity2[1]},
            "dep_heads": list(self.dep_heads),
            "relation": self.relation,
        }


def _span(obj, key: str, n: int) -> tuple:
    sp = obj.get(key)
    if not isinstance(sp, dict) or "start" not in sp or "end" not in sp:
        raise CorpusError(f"{key} must be an object with start and end")
    start, end = sp["start"], sp["end"]
    if not (isinstance(start, int) and isinstance(end, int)):
        raise CorpusError(f"{key} start/end must be integers")
    if not 0 <= start <= end < n:
        raise CorpusError(f"{key} span ({start}, {end}) out of range for {n} tokens")
    return (start, end)


def validate_instance(inst: Instance) -> Instance:
    n = inst.n
    (s1, e1), (s2, e2) = inst.entity1, inst.entity2
    if s1 <= e2 and s2 <= e1:
        raise CorpusError(f"entity spans ({s1}, {e1}) and ({s2}, {e2}) overlap")
    if len(inst.dep_heads) != n:
        raise CorpusError(f"dep_heads has {len(inst.dep_heads)} entries for {n} tokens")
    try:
        DepTree(inst.dep_heads)
    except TreeError as exc:
        raise CorpusError(f"invalid dependency tree: {exc}") from None
    return inst


def instance_from_obj(obj, require_relation: bool = True) -> Instance:
    if not isinstance(obj, dict):
        raise CorpusError("instance must be a JSON object")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        raise CorpusError("tokens must be a non-empty list of strings")
    n = len(tokens)
    heads = obj.get("dep_heads")
    if not isinstance(heads, list) or not all(isinstance(h, int) for h in heads):
        raise CorpusError("dep_heads must be a list of integers")
    relation = obj.get("relation")
    if relation is None:
        if require_relation:
            raise CorpusError("missing relation")
    elif not isinstance(relation, str):
        raise CorpusError("relation must be a string")
    inst = Instance(tuple(tokens), _span(obj, "entity1", n), _span(obj, "entity2", n),
                    tuple(heads), relation)
    return validate_instance(inst)


def parse_instance_line(text: str, require_relation: bool = True) -> Instance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed JSON: {exc.msg}") from None
    return instance_from_obj(obj, require_relation)


@dataclass
class LoadResult:
    instances: list
    skipped: int = 0
    errors: list = field(default_factory=list)


def load_corpus(path, lenient: bool = False, require_relation: bool = True) -> LoadResult:
    """Read newline-delimited JSON instances; blank lines are ignored."""
    result = LoadResult([])
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                result.instances.append(parse_instance_line(line, require_relation))
            except CorpusError as exc:
                if not lenient:
                    raise CorpusError(str(exc), lineno) from None
                result.skipped += 1
                result.errors.append(CorpusError(str(exc), lineno))
    if result.skipped:
        log.warning("%s: skipped %d malformed line(s)", path, result.skipped)
    return result


def write_corpus(instances, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), ensure_ascii=False) + "\n")


class Vocab:
    """Token and label id maps. PAD=0 and UNK=1 for tokens; None=0 for labels."""

    def __init__(self, tokens: dict, labels: dict):
        self.tokens = dict(tokens)
        self.labels = dict(labels)
        self.id_to_label = {i: l for l, i in self.labels.items()}

    def token_id(self, tok: str) -> int:
        return self.tokens.get(tok, UNK)

    def label_id(self, label: str) -> int:
        return self.labels[label]

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.tokens)

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "labels": self.labels}

    @classmethod
    def from_json(cls, obj) -> "Vocab":
        return cls(obj["tokens"], obj["labels"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens and self.labels == other.labels


def build_vocab(train, min_count: int = 1) -> Vocab:
    if not train:
        raise ValueError("cannot build a vocabulary from an empty training set")
    counts = Counter(tok for inst in train for tok in inst.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    tokens = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
    for t in kept:
        tokens.setdefault(t, len(tokens))
    rels = sorted({inst.relation for inst in train if inst.relation and inst.relation != NONE_LABEL})
    labels = {NONE_LABEL: 0}
    for r in rels:
        labels[r] = len(labels)
    return Vocab(tokens, labels)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    coverage: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab_size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    m = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(vocab_size, dim))
    m[PAD] = 0.0
    return m


def load_word2vec_text(path, vocab: Vocab, dim: int = 50,
                       rng: Optional[np.random.Generator] = None) -> EmbeddingTable:
    """Copy rows for in-vocabulary words from a word2vec text file.

    Words missing from the file keep a seeded uniform [-0.25, 0.25] row.
    ``coverage`` is the fraction of non-reserved vocabulary words found.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    matrix = random_embeddings(len(vocab), dim, rng)
    found = set()
    declared = None
    n_lines = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                declared = (int(parts[0]), int(parts[1]))
                if declared[1] != dim:
                    raise CorpusError(f"embedding header dimension {declared[1]} != configured d_w {dim}", 1)
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CorpusError(f"vector for {word!r} has {len(values)} values, expected d_w={dim}", lineno)
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise CorpusError(f"non-numeric field in vector for {word!r}", lineno) from None
            n_lines += 1
            idx = vocab.tokens.get(word)
            if idx is not None and idx not in (PAD, UNK):
                matrix[idx] = vec
                found.add(idx)
    if declared is not None and declared[0] != n_lines:
        log.warning("%s: header declares %d vectors but file has %d; using the data lines",
                    path, declared[0], n_lines)
    matrix[PAD] = 0.0
    real = len(vocab) - 2
    return EmbeddingTable(matrix, len(found) / real if real > 0 else 0.0)


def positional_bucket(i: int, entity_start: int, max_pos: int = MAX_POS) -> int:
    return int(np.clip(i - entity_start, -max_pos, max_pos)) + max_pos


@dataclass(frozen=True)
class EncodedInstance:
    word_ids: np.ndarray
    indicator_ids: np.ndarray
    pos1_ids: np.ndarray
    pos2_ids: np.ndarray
    ent1_ctx: tuple
    ent2_ctx: tuple
    dep_dist1: np.ndarray
    dep_dist2: np.ndarray
    label_id: int
    entity1: tuple
    entity2: tuple

    @property
    def n(self) -> int:
        return len(self.word_ids)


def context_range(span, n: int, window: int = CONTEXT_WINDOW) -> tuple:
    return (max(0, span[0] - window), min(n - 1, span[1] + window))


def encode(inst: Instance, vocab: Vocab, max_pos: int = MAX_POS,
           context_window: int = CONTEXT_WINDOW) -> EncodedInstance:
    n = inst.n
    word_ids = np.array([vocab.token_id(t) for t in inst.tokens], dtype=np.int64)
    indicator = np.zeros(n, dtype=np.int64)
    indicator[inst.entity1[0]:inst.entity1[1] + 1] = INDICATOR_E1
    indicator[inst.entity2[0]:inst.entity2[1] + 1] = INDICATOR_E2
    pos1 = np.array([positional_bucket(i, inst.entity1[0], max_pos) for i in range(n)], dtype=np.int64)
    pos2 = np.array([positional_bucket(i, inst.entity2[0], max_pos) for i in range(n)], dtype=np.int64)
    tree = DepTree(inst.dep_heads)
    rel = inst.relation if inst.relation is not None else NONE_LABEL
    # labels unseen in training map to -1: a gold positive no prediction can match
    label_id = vocab.labels.get(rel, -1)
    return EncodedInstance(
        word_ids, indicator, pos1, pos2,
        context_range(inst.entity1, n, context_window),
        context_range(inst.entity2, n, context_window),
        token_distances(tree, entity_head_index(inst.entity1)),
        token_distances(tree, entity_head_index(inst.entity2)),
        label_id, tuple(inst.entity1), tuple(inst.entity2),
    )
