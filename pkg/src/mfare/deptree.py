"""Dependency trees from head arrays, tree distances and distance-based attention weights."""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np


class TreeError(ValueError):
    """Head array does not describe a single rooted tree."""


class DepTree:
    """A validated dependency tree. ``heads[i] == -1`` marks the root."""

    def __init__(self, heads: Sequence[int]):
        heads = [int(h) for h in heads]
        n = len(heads)
        if n == 0:
            raise TreeError("empty head array")
        roots = [i for i, h in enumerate(heads) if h == -1]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        adjacency: list[list[int]] = [[] for _ in range(n)]
        for i, h in enumerate(heads):
            if h == -1:
                continue
            if not 0 <= h < n:
                raise TreeError(f"head {h} of token {i} out of range [0, {n - 1}]")
            if h == i:
                raise TreeError(f"token {i} is its own head")
            adjacency[i].append(h)
            adjacency[h].append(i)
        # every token must reach the root by following heads
        state = [0] * n  # 0 unseen, 1 on current path, 2 reaches root
        state[roots[0]] = 2
        for start in range(n):
            path = []
            v = start
            while state[v] == 0:
                state[v] = 1
                path.append(v)
                v = heads[v]
            if state[v] == 1:
                raise TreeError(f"cycle through token {v}")
            for u in path:
                state[u] = 2
        self.heads = tuple(heads)
        self.root = roots[0]
        self.adjacency = tuple(tuple(a) for a in adjacency)

    def __len__(self) -> int:
        return len(self.heads)


def build_tree(heads: Sequence[int]) -> DepTree:
    return DepTree(heads)


def token_distances(tree: DepTree, src: int) -> np.ndarray:
    """Edge counts from ``src`` to every token, ignoring arc direction."""
    n = len(tree)
    if not 0 <= src < n:
        raise IndexError(f"source token {src} out of range for {n} tokens")
    dist = np.full(n, -1, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in tree.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def entity_head_index(span) -> int:
    """The last token of a span is taken as the entity's head."""
    return int(span[1])


def dep_weight(l: int, ws: int, zero_as_one: bool = True) -> float:
    """``1 / 2**(l-1)`` inside the window [1, ws], ``1 / 2**ws`` outside.

    A distance of 0 (the entity head itself) gets weight 1.0 unless
    ``zero_as_one`` is False, in which case it falls to the outside value.
    """
    if l == 0 and zero_as_one:
        l = 1
    if 1 <= l <= ws:
        return 1.0 / 2.0 ** (l - 1)
    return 1.0 / 2.0 ** ws


def dep_weights(dist: Sequence[int], ws: int, zero_as_one: bool = True) -> np.ndarray:
    return np.array([dep_weight(int(l), ws, zero_as_one) for l in dist])


def attention_mask(l1: Sequence[int], l2: Sequence[int], ws: int,
                   fallback_spans=()) -> np.ndarray:
    """Keep tokens whose mean tree distance to the two entity heads is at most ``ws``.

    If nothing survives, the tokens of ``fallback_spans`` (inclusive
    ``(start, end)`` pairs) are kept instead; with no spans given, all tokens.
    """
    l1 = np.asarray(l1)
    l2 = np.asarray(l2)
    if l1.shape != l2.shape:
        raise ValueError(f"distance length mismatch: {l1.shape} vs {l2.shape}")
    keep = (l1 + l2) / 2.0 <= ws
    if not keep.any():
        if fallback_spans:
            for start, end in fallback_spans:
                keep[start:end + 1] = True
        else:
            keep[:] = True
    return keep
