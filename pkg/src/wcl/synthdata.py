"""Synthetic sphere-mixture data, the augmentation model, and a linear probe."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplit, InvalidParams, MalformedFile, ShapeMismatch
from .matkernel import NORM_FLOOR, l2_normalize_rows, read_wcle, write_wcle

PROBE_ITERS = 500
PROBE_LR = 0.1


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class Dataset:
    x: np.ndarray
    labels: np.ndarray
    class_count: int
    seed: int | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.shape[0] != self.labels.shape[0]:
            raise ShapeMismatch("one label per row required")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def gen_sphere_mixture(c: int, n: int, d: int, spread: float, seed) -> Dataset:
    """``c`` random unit centers; each point is ``normalize(center + spread * N(0, I))``.

    Class sizes differ by at most one and the sample order is shuffled.
    """
    if c < 2 or n < c or d < 2 or not spread > 0:
        raise InvalidParams(f"need c >= 2, n >= c, d >= 2, spread > 0; got c={c} n={n} d={d} spread={spread}")
    rng = _rng(seed)
    centers = l2_normalize_rows(rng.standard_normal((c, d)))
    labels = rng.permutation(np.arange(n) % c)
    x = l2_normalize_rows(centers[labels] + spread * rng.standard_normal((n, d)))
    return Dataset(x, labels, c, seed if isinstance(seed, int) else None)


def augment(x_rows, strength: float, seed) -> np.ndarray:
    """Gaussian jitter plus coordinate dropout (rate ``strength / 2``), re-normalized.

    ``strength == 0`` returns an exact copy. A row that would lose every
    coordinate keeps its jittered values instead.
    """
    if strength < 0:
        raise InvalidParams(f"augmentation strength must be >= 0, got {strength}")
    x = np.array(x_rows, dtype=np.float64, ndmin=2)
    if strength == 0:
        return x
    rng = _rng(seed)
    noisy = x + strength * rng.standard_normal(x.shape)
    keep = rng.random(x.shape) >= strength / 2
    out = noisy * keep
    dead = np.linalg.norm(out, axis=1) < NORM_FLOOR
    out[dead] = noisy[dead]
    return l2_normalize_rows(out)


def _split(n, train_fraction, rng):
    order = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    return order[:n_train], order[n_train:]


def linear_probe(features, labels, train_fraction: float = 0.5, seed=0) -> float:
    """Held-out accuracy of a softmax classifier on frozen features.

    Features are standardized with train-split statistics, then the
    classifier (weights plus bias) runs full-batch gradient descent on the
    mean cross-entropy.
    """
    f = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if f.shape[0] != labels.shape[0]:
        raise ShapeMismatch("one label per feature row required")
    train, test = _split(f.shape[0], train_fraction, _rng(seed))
    classes = np.unique(labels[train]) if train.size else np.array([])
    if classes.size < 2 or test.size == 0:
        raise DegenerateSplit(f"train split has {classes.size} classes and test split {test.size} rows")

    mu = f[train].mean(axis=0)
    sd = f[train].std(axis=0)
    sd[sd < NORM_FLOOR] = 1.0
    xs = (f - mu) / sd
    n_cls = int(labels.max()) + 1
    xt = xs[train]
    onehot = np.eye(n_cls)[labels[train]]
    w = np.zeros((f.shape[1], n_cls))
    b = np.zeros(n_cls)
    for _ in range(PROBE_ITERS):
        logits = xt @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / train.size
        w -= PROBE_LR * (xt.T @ g)
        b -= PROBE_LR * g.sum(axis=0)
    pred = np.argmax(xs[test] @ w + b, axis=1)
    return float(np.mean(pred == labels[test]))


def save_dataset(path: str | os.PathLike, ds: Dataset) -> None:
    """WCLE matrix at ``path`` plus u32 little-endian labels at ``path + '.labels'``."""
    write_wcle(path, ds.x)
    ds.labels.astype("<u4").tofile(f"{os.fspath(path)}.labels")


def load_dataset(path: str | os.PathLike) -> Dataset:
    x = read_wcle(path)
    label_path = f"{os.fspath(path)}.labels"
    raw = np.fromfile(label_path, dtype="<u4") if os.path.exists(label_path) else None
    if raw is None or raw.shape[0] != x.shape[0]:
        raise MalformedFile(f"{label_path}: missing or wrong length label sidecar")
    labels = raw.astype(np.int64)
    return Dataset(x, labels, int(labels.max()) + 1)
