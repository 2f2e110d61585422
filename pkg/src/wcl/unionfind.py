"""Disjoint-set forest and the pure-Python connected-components kernel.

``label_components`` here is the reference implementation; the compiled
twin in ``_ccl_ext.pyx`` must return identical results.
"""
from __future__ import annotations

import numpy as np


class DisjointSet:
    """Union by rank with path compression over elements ``0..n-1``."""

    def __init__(self, n: int = 0):
        self.parent: list[int] = []
        self.rank: list[int] = []
        for v in range(n):
            self.make_set(v)

    def __len__(self):
        return len(self.parent)

    def make_set(self, v: int) -> None:
        if v != len(self.parent):
            raise ValueError(f"elements must be added in order; expected {len(self.parent)}, got {v}")
        self.parent.append(v)
        self.rank.append(0)

    def find(self, v: int) -> int:
        parent = self.parent
        root = v
        while parent[root] != root:
            root = parent[root]
        while parent[v] != root:
            parent[v], v = root, parent[v]
        return root

    def union(self, a: int, b: int) -> bool:
        """Merge the sets holding ``a`` and ``b``; return False if already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def label_components(n, src, dst):
    """Label the connected components of an undirected edge list.

    Returns ``(labels, unions)``: int64 labels numbered by first appearance of
    each component in vertex order, and the count of merges that changed the
    partition.
    """
    ds = DisjointSet(n)
    unions = 0
    for a, b in zip(np.asarray(src).tolist(), np.asarray(dst).tolist()):
        if ds.find(a) != ds.find(b):
            ds.union(a, b)
            unions += 1
    labels = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for v in range(n):
        root = ds.find(v)
        labels[v] = seen.setdefault(root, len(seen))
    return labels, unions
