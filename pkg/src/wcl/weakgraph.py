"""Weak labels from per-batch 1-nearest-neighbor graphs.

Pipeline: similarity matrix -> symmetric 1-NN adjacency -> union-find
connected components -> pairwise "same component" weak-label matrix.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NotSquare, TooSmall
from .matkernel import cosine_similarity_matrix


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Symmetric boolean N x N matrix with an empty diagonal."""

    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=bool)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise NotSquare(f"adjacency must be square, got {e.shape}")
        if e.diagonal().any():
            raise ValueError("adjacency diagonal must be empty")
        if not np.array_equal(e, e.T):
            raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "edges", e)

    @property
    def n(self) -> int:
        return self.edges.shape[0]

    def edge_list(self) -> tuple[np.ndarray, np.ndarray]:
        """Upper-triangle edges ``(i, j)`` with ``i < j`` in row-major order."""
        i, j = np.nonzero(np.triu(self.edges, k=1))
        return i.astype(np.int64), j.astype(np.int64)


@dataclass(frozen=True)
class ComponentLabels:
    labels: np.ndarray
    unions: int = 0

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def count(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass(frozen=True)
class WeakLabelMatrix:
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]


def nearest_neighbors(sim) -> np.ndarray:
    """Index of each row's most similar other column (lowest index on ties)."""
    s = np.array(sim, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise NotSquare(f"similarity matrix must be square, got {s.shape}")
    if s.shape[0] < 2:
        raise TooSmall("1-NN graph needs at least two vertices")
    np.fill_diagonal(s, -np.inf)
    # argmax returns the first maximal index, which is the tie rule we want
    return np.argmax(s, axis=1)


def build_one_nn_adjacency(sim) -> AdjacencyMatrix:
    """Link every vertex to its nearest neighbor, then symmetrize."""
    nn = nearest_neighbors(sim)
    n = nn.shape[0]
    edges = np.zeros((n, n), dtype=bool)
    edges[np.arange(n), nn] = True
    return AdjacencyMatrix(edges | edges.T)


def connected_components(adj: AdjacencyMatrix, kernel=None) -> ComponentLabels:
    """Union-find labeling of ``adj``.

    ``kernel`` overrides the backend chosen at import (``_kernels.BACKEND``);
    both backends produce identical labels.
    """
    kernel = kernel or _kernels.label_components
    src, dst = adj.edge_list()
    labels, unions = kernel(adj.n, src, dst)
    return ComponentLabels(np.asarray(labels, dtype=np.int64), int(unions))


def weak_labels(comp: ComponentLabels) -> WeakLabelMatrix:
    lab = comp.labels
    y = lab[:, None] == lab[None, :]
    np.fill_diagonal(y, False)
    return WeakLabelMatrix(y)


def weak_labels_from_embeddings(v) -> tuple[WeakLabelMatrix, ComponentLabels]:
    """Full pipeline on a unit-row embedding batch."""
    sim = cosine_similarity_matrix(v, v)
    comp = connected_components(build_one_nn_adjacency(sim))
    return weak_labels(comp), comp


def component_stats(comp: ComponentLabels) -> dict:
    """Component count, sizes (descending) and a size -> frequency histogram.

    Histogram keys are strings so the record round-trips through JSON.
    """
    sizes = sorted(np.bincount(comp.labels).tolist(), reverse=True) if comp.n else []
    hist = Counter(sizes)
    return {
        "component_count": len(sizes),
        "sizes": sizes,
        "histogram": {str(k): hist[k] for k in sorted(hist)},
    }


def component_purity(comp: ComponentLabels, classes) -> float:
    """Fraction of vertices whose class equals their component's majority class."""
    classes = np.asarray(classes)
    if classes.shape[0] != comp.n:
        raise DimensionMismatch("class array length must match vertex count")
    hits = 0
    for c in range(comp.count):
        members = classes[comp.labels == c]
        hits += np.bincount(members).max()
    return hits / comp.n
