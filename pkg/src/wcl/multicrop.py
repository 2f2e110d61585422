"""Feature memory, epoch-end exact KNN, and the crop-source scheduler."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompleteStore, IndexOutOfRange, KTooLarge, MissingKnnTable, ShapeMismatch
from .matkernel import NORM_FLOOR


class FeatureStore:
    """Latest backbone features per dataset sample, overwritten on every visit."""

    def __init__(self, capacity: int, dim: int):
        self.features = np.zeros((capacity, dim), dtype=np.float64)
        self.seen = np.zeros(capacity, dtype=bool)

    @property
    def capacity(self) -> int:
        return self.features.shape[0]

    def record(self, indices, h) -> "FeatureStore":
        idx = np.asarray(indices, dtype=np.int64).ravel()
        h = np.asarray(h, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != idx.shape[0] or h.shape[1] != self.features.shape[1]:
            raise ShapeMismatch(
                f"features {h.shape} do not match {idx.shape[0]} indices x dim {self.features.shape[1]}"
            )
        if idx.size and (idx.min() < 0 or idx.max() >= self.capacity):
            raise IndexOutOfRange(f"indices must lie in [0, {self.capacity})")
        self.features[idx] = h
        self.seen[idx] = True
        return self

    def complete(self) -> bool:
        return bool(self.seen.all())


def record_features(store: FeatureStore, indices, h) -> FeatureStore:
    return store.record(indices, h)


@dataclass(frozen=True)
class KnnTable:
    neighbors: np.ndarray  # (capacity, k) int64

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]


def compute_knn_table(store: FeatureStore, k: int) -> KnnTable:
    """Exact cosine KNN per sample, self excluded, ties broken by lowest index."""
    n = store.capacity
    if not store.complete():
        missing = int(np.flatnonzero(~store.seen)[0])
        raise IncompleteStore(f"sample {missing} has no recorded features")
    if k < 0 or k >= n:
        raise KTooLarge(f"k={k} must be in [0, {n})")
    if k == 0:
        return KnnTable(np.zeros((n, 0), dtype=np.int64))
    f = store.features
    norms = np.linalg.norm(f, axis=1)
    unit = f / np.maximum(norms, NORM_FLOOR)[:, None]
    sim = unit @ unit.T
    np.fill_diagonal(sim, -np.inf)
    # stable sort on the negated similarity keeps lower indices first among ties
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    return KnnTable(order.astype(np.int64))


def crop_warmup_epochs(fraction: float, epochs: int) -> int:
    """First epoch that uses KNN crops: ``ceil(fraction * epochs)``."""
    # round first so that e.g. 0.25 * 200 never lands a hair above 50
    return int(math.ceil(round(fraction * epochs, 9)))


def select_crop_sources(epoch: int, warmup_epochs: int, knn: KnnTable | None, anchors, crops_per_anchor: int) -> np.ndarray:
    """Dataset indices whose views serve as extra crops for each anchor.

    Before ``warmup_epochs`` every crop comes from the anchor itself. From
    then on crop ``j`` comes from the anchor's ``j mod k``-th nearest
    neighbor, so asking for more crops than neighbors cycles the list.
    """
    anchors = np.asarray(anchors, dtype=np.int64).ravel()
    if crops_per_anchor == 0:
        return np.zeros((anchors.size, 0), dtype=np.int64)
    if epoch < warmup_epochs:
        return np.repeat(anchors[:, None], crops_per_anchor, axis=1)
    if knn is None:
        raise MissingKnnTable(f"epoch {epoch} is past warm-up ({warmup_epochs}) but no KNN table exists")
    if knn.k == 0:
        raise KTooLarge("KNN crops need k >= 1")
    cols = np.arange(crops_per_anchor) % knn.k
    return knn.neighbors[anchors][:, cols]


def propagate_labels(comp_labels, crop_anchor) -> np.ndarray:
    """Weak labels for a block of crops that inherit their anchors' components.

    ``comp_labels`` are batch component ids; ``crop_anchor[r]`` is the batch
    position crop ``r`` belongs to. Crops are positives of each other when
    their anchors share a component (crops of one anchor included).
    """
    lab = np.asarray(comp_labels)[np.asarray(crop_anchor, dtype=np.int64)]
    y = lab[:, None] == lab[None, :]
    np.fill_diagonal(y, False)
    return y
