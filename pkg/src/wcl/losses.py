"""Contrastive objectives with closed-form gradients.

Each loss takes unit-row embeddings and returns a :class:`LossReport`
holding the scalar value and one gradient per embedding argument. The
gradients are with respect to the normalized embeddings; pulling them back
through normalization is the encoder's job.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveTau, ShapeMismatch, TooSmall
from .matkernel import log_softmax_rows


@dataclass
class LossReport:
    value: float
    grads: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class LossWeights:
    tau: float = 0.1
    lambda_c: float = 1.0
    beta: float = 0.5
    gamma_c: float = 0.5

    def __post_init__(self):
        _check_tau(self.tau)
        for name in ("lambda_c", "beta", "gamma_c"):
            w = getattr(self, name)
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {w}")


@dataclass
class LossParts:
    """Component values of the combined objective; crop terms may be absent."""

    nce: float
    cnce: float | None = None
    swap: float = 0.0
    cswap: float | None = None


def _check_tau(tau):
    if not (tau > 0) or not np.isfinite(tau):
        raise NonPositiveTau(f"tau must be a positive finite number, got {tau}")


def _labels(y) -> np.ndarray:
    return np.asarray(getattr(y, "y", y), dtype=bool)


def nce_loss(z1, z2, tau: float) -> LossReport:
    """Symmetric NT-Xent over two views.

    Each of the 2N embeddings is an anchor whose positive is its counterpart
    in the other view; the softmax runs over the remaining 2N - 1 embeddings.
    The value is the mean over anchors.
    """
    _check_tau(tau)
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise ShapeMismatch(f"views differ in shape: {z1.shape} vs {z2.shape}")
    n = z1.shape[0]
    if n < 2:
        raise TooSmall("NCE needs at least two samples per view")
    z = np.concatenate([z1, z2], axis=0)
    m = 2 * n
    logits = (z @ z.T) / tau
    others = ~np.eye(m, dtype=bool)
    logp = log_softmax_rows(logits, others)
    pos = np.concatenate([np.arange(n, m), np.arange(n)])
    rows = np.arange(m)
    value = -np.mean(logp[rows, pos])

    # d value / d logits
    g = np.where(others, np.exp(logp), 0.0)
    g[rows, pos] -= 1.0
    g /= m
    dz = (g + g.T) @ z / tau
    return LossReport(float(value), [dz[:n], dz[n:]])


def sup_con_loss(v, y, tau: float, mean_over_positives: bool = False) -> LossReport:
    """Supervised contrastive loss under the boolean pair relation ``y``.

    Anchor ``i`` contributes ``-sum_j y_ij log softmax_{k != i}(s_ik)[j]``
    with the denominator over every other sample, positives included. The
    sum is divided by the positive count when ``mean_over_positives`` is set.
    Anchors without positives contribute zero; the value averages over all N.
    """
    _check_tau(tau)
    v = np.asarray(v, dtype=np.float64)
    y = _labels(y)
    n = v.shape[0]
    if y.shape != (n, n):
        raise ShapeMismatch(f"label matrix {y.shape} does not match {n} embeddings")
    if n < 2:
        raise TooSmall("supervised contrastive loss needs at least two samples")
    w = y.astype(np.float64)
    np.fill_diagonal(w, 0.0)
    if mean_over_positives:
        counts = w.sum(axis=1, keepdims=True)
        w = np.divide(w, counts, out=np.zeros_like(w), where=counts > 0)
    if not w.any():
        return LossReport(0.0, [np.zeros_like(v)])

    logits = (v @ v.T) / tau
    others = ~np.eye(n, dtype=bool)
    logp = log_softmax_rows(logits, others)
    value = -np.sum(w * np.where(others, logp, 0.0)) / n

    g = np.where(others, np.exp(logp), 0.0) * w.sum(axis=1, keepdims=True) - w
    g /= n
    dv = (g + g.T) @ v / tau
    return LossReport(float(value), [dv])


def swap_loss(v1, v2, y1, y2, tau: float, mean_over_positives: bool = False) -> LossReport:
    """Cross-view supervision: labels of view 1 supervise view 2 and vice versa."""
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ShapeMismatch(f"views differ in shape: {v1.shape} vs {v2.shape}")
    a = sup_con_loss(v1, y2, tau, mean_over_positives)
    b = sup_con_loss(v2, y1, tau, mean_over_positives)
    return LossReport(a.value + b.value, [a.grads[0], b.grads[0]])


def overall_loss(parts: LossParts, w: LossWeights) -> float:
    """Weighted sum ``nce + lambda*cnce + beta*swap + gamma*cswap``; absent terms count as 0."""
    cnce = parts.cnce or 0.0
    cswap = parts.cswap or 0.0
    return parts.nce + w.lambda_c * cnce + w.beta * parts.swap + w.gamma_c * cswap
