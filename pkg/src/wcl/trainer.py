"""The weakly supervised contrastive training loop.

One step: two augmented views (plus optional crops) go through the shared
backbone; the auxiliary head's embeddings yield per-view weak labels; the
instance-discrimination loss, the swapped supervised loss, and the two crop
terms are combined; a single SGD step follows and the view-1 backbone
features are recorded for the epoch-end KNN refresh.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import encoder, losses, multicrop, synthdata, weakgraph
from .errors import ConfigError


def stream_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one consumer, keyed by ``(seed, label)``."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest[:8], "little")])


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    base_lr: float = 0.1
    warmup_lr_epochs: int = 10
    momentum: float = 0.9
    weight_decay: float = 1e-6
    tau: float = 0.1
    lambda_c: float = 1.0
    beta: float = 0.5
    gamma_c: float = 0.5
    knn_k: int = 4
    crop_warmup_fraction: float = 0.25
    crops_per_sample: int = 6
    view_strength: float = 0.1
    crop_strength: float = 0.2
    hidden_dim: int = 64
    proj_dim: int = 32
    seed: int = 0
    supcon_mean_over_positives: bool = False

    def validate(self) -> "TrainConfig":
        def need(key, ok, msg):
            if not ok:
                raise ConfigError(key, msg)

        for key in ("epochs", "warmup_lr_epochs", "knn_k", "crops_per_sample", "seed"):
            need(key, isinstance(getattr(self, key), int) and getattr(self, key) >= 0, "must be a non-negative integer")
        for key in ("hidden_dim", "proj_dim"):
            need(key, isinstance(getattr(self, key), int) and getattr(self, key) >= 1, "must be a positive integer")
        need("batch_size", isinstance(self.batch_size, int) and self.batch_size >= 4, "must be an integer >= 4")
        need("tau", np.isfinite(self.tau) and self.tau > 0, "must be positive")
        for key in ("base_lr", "weight_decay", "lambda_c", "beta", "gamma_c", "view_strength", "crop_strength"):
            val = getattr(self, key)
            need(key, np.isfinite(val) and val >= 0, "must be finite and non-negative")
        need("momentum", 0 <= self.momentum < 1, "must lie in [0, 1)")
        need("crop_warmup_fraction", 0 <= self.crop_warmup_fraction <= 1, "must lie in [0, 1]")
        if self.uses_crops:
            need("knn_k", self.knn_k >= 1, "must be >= 1 when crops are enabled")
        return self

    @property
    def weights(self) -> losses.LossWeights:
        return losses.LossWeights(self.tau, self.lambda_c, self.beta, self.gamma_c)

    @property
    def uses_crops(self) -> bool:
        return self.crops_per_sample > 0 and (self.lambda_c > 0 or self.gamma_c > 0)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochMetrics:
    epoch: int
    loss_nce: float
    loss_swap: float
    loss_cnce: float
    loss_cswap: float
    loss_overall: float
    component_count: float
    lr: float
    wall_time: float = 0.0

    def record(self, config: TrainConfig, with_time: bool = False) -> dict:
        """JSON-ready dict; wall time is left out unless asked for so logs stay reproducible."""
        out = asdict(self)
        if not with_time:
            out.pop("wall_time")
        out.update(base_lr=config.base_lr, momentum=config.momentum, weight_decay=config.weight_decay)
        return out


@dataclass
class Objective:
    value: float
    grads: encoder.ModelParams
    parts: losses.LossParts
    info: dict


def compute_objective(params, x1, x2, xc, config: TrainConfig, weak=None) -> Objective:
    """Combined loss and parameter gradients for one batch of prepared views.

    ``xc`` is ``None`` or the ``(c * n, D)`` crop views, crop ``r`` belonging
    to anchor ``r % n``. Crop set ``j`` forms its own NCE pair with each main
    view and its own supervised term under both views' labels. ``weak`` optionally pins the view component labels
    ``(comp1, comp2)`` instead of deriving them from the current embeddings.
    """
    w = config.weights
    tau = w.tau
    mop = config.supcon_mean_over_positives
    t1 = encoder.forward(params, x1)
    t2 = encoder.forward(params, x2)
    n = t1.z.shape[0]

    if weak is None:
        y1, comp1 = weakgraph.weak_labels_from_embeddings(t1.v)
        y2, comp2 = weakgraph.weak_labels_from_embeddings(t2.v)
    else:
        comp1, comp2 = weak
        y1, y2 = weakgraph.weak_labels(comp1), weakgraph.weak_labels(comp2)

    nce = losses.nce_loss(t1.z, t2.z, tau)
    dz1, dz2 = nce.grads
    # labels from view 1 supervise view 2 and vice versa
    swap = losses.swap_loss(t1.v, t2.v, y1, y2, tau, mop)
    dv1 = dv2 = None
    if w.beta > 0:
        dv1, dv2 = w.beta * swap.grads[0], w.beta * swap.grads[1]

    parts = losses.LossParts(nce=nce.value, swap=swap.value)
    info = {"y1": y1, "y2": y2, "comp1": comp1, "comp2": comp2, "trace1": t1, "trace2": t2,
            "swap_pairs": (("v1", "y2"), ("v2", "y1"))}
    crop_grads = None
    if xc is not None and len(xc):
        tc = encoder.forward(params, xc)
        c = tc.z.shape[0] // n
        dzc = np.zeros_like(tc.z)
        cnce_total = 0.0
        for j in range(c):
            block = slice(j * n, (j + 1) * n)
            for zv, dzv in ((t1.z, dz1), (t2.z, dz2)):
                rep = losses.nce_loss(zv, tc.z[block], tau)
                cnce_total += rep.value
                if w.lambda_c > 0:
                    dzv += w.lambda_c / (2 * c) * rep.grads[0]
                    dzc[block] += w.lambda_c / (2 * c) * rep.grads[1]
        parts.cnce = cnce_total / (2 * c)

        # each crop inherits its anchor's weak-label row
        crop_anchor = np.arange(n)
        yc1 = multicrop.propagate_labels(comp1.labels, crop_anchor)
        yc2 = multicrop.propagate_labels(comp2.labels, crop_anchor)
        dvc = np.zeros_like(tc.v)
        cswap_total = 0.0
        for j in range(c):
            block = slice(j * n, (j + 1) * n)
            for yc in (yc1, yc2):
                rep = losses.sup_con_loss(tc.v[block], yc, tau, mop)
                cswap_total += rep.value
                dvc[block] += w.gamma_c / c * rep.grads[0]
        parts.cswap = cswap_total / c
        if w.gamma_c == 0:
            dvc = None
        crop_grads = encoder.backward(params, tc, dzc if w.lambda_c > 0 else None, dvc)
        info.update(trace_crops=tc, yc1=yc1, yc2=yc2)

    grads = encoder.add_grads(encoder.backward(params, t1, dz1, dv1), encoder.backward(params, t2, dz2, dv2))
    if crop_grads is not None:
        grads = encoder.add_grads(grads, crop_grads)
    return Objective(losses.overall_loss(parts, w), grads, parts, info)


@dataclass
class StepResult:
    params: encoder.ModelParams
    opt_state: encoder.OptimizerState
    metrics: dict
    h1: np.ndarray


def train_step(params, opt_state, batch_x, batch_indices, config: TrainConfig, crop_x=None, *,
               lr: float, rng_views, rng_crops=None, store=None, hook=None) -> StepResult:
    """One optimization step on a batch.

    ``crop_x`` holds the raw source rows for the crops, shape ``(c, n, D)``
    with ``crop_x[j, i]`` the j-th crop source of anchor ``i``. When given,
    ``store`` receives the view-1 backbone features of ``batch_indices``.
    """
    batch_x = np.asarray(batch_x, dtype=np.float64)
    if batch_x.shape[0] < 4:
        raise ValueError("training batches need at least 4 samples")
    x1 = synthdata.augment(batch_x, config.view_strength, rng_views)
    x2 = synthdata.augment(batch_x, config.view_strength, rng_views)
    xc = None
    if crop_x is not None and np.size(crop_x):
        flat = np.asarray(crop_x, dtype=np.float64).reshape(-1, batch_x.shape[1])
        xc = synthdata.augment(flat, config.crop_strength, rng_crops)

    obj = compute_objective(params, x1, x2, xc, config)
    if hook is not None:
        hook(obj)
    new_params, new_state = encoder.sgd_step(params, obj.grads, opt_state, lr)
    h1 = obj.info["trace1"].h
    if store is not None:
        store.record(batch_indices, h1)
    p = obj.parts
    metrics = {
        "loss_nce": p.nce,
        "loss_swap": p.swap,
        "loss_cnce": p.cnce or 0.0,
        "loss_cswap": p.cswap or 0.0,
        "loss_overall": obj.value,
        "component_count": 0.5 * (obj.info["comp1"].count + obj.info["comp2"].count),
        "lr": lr,
    }
    return StepResult(new_params, new_state, metrics, h1)


@dataclass
class TrainResult:
    params: encoder.ModelParams
    metrics: list[EpochMetrics] = field(default_factory=list)
    initial_params: encoder.ModelParams | None = None
    knn: multicrop.KnnTable | None = None


def schedule_lengths(config: TrainConfig, n: int) -> tuple[int, int, int]:
    """``(steps_per_epoch, warmup_steps, total_steps)``; warm-up is clipped below the total."""
    spe = n // config.batch_size
    total = spe * config.epochs
    warm = min(config.warmup_lr_epochs * spe, max(total - 1, 0))
    return spe, warm, total


def init_model(config: TrainConfig, in_dim: int) -> encoder.ModelParams:
    return encoder.init_params(in_dim, config.hidden_dim, config.proj_dim, stream_rng(config.seed, "init"))


def train(config: TrainConfig, dataset: synthdata.Dataset, hook=None, log=None) -> TrainResult:
    """Run the full schedule; ``log`` is called with each finished :class:`EpochMetrics`."""
    config.validate()
    params = init_model(config, dataset.dim)
    initial = params.copy()
    result = TrainResult(params, [], initial)
    if config.epochs == 0:
        return result

    n = dataset.n
    spe, warm, total = schedule_lengths(config, n)
    if spe == 0:
        raise ConfigError("batch_size", f"{config.batch_size} exceeds dataset size {n}")
    opt = encoder.OptimizerState.zeros_like(params, config.momentum, config.weight_decay)
    rng_shuffle = stream_rng(config.seed, "shuffle")
    rng_views = stream_rng(config.seed, "views")
    rng_crops = stream_rng(config.seed, "crops")

    crops_on = config.uses_crops
    crop_warm = multicrop.crop_warmup_epochs(config.crop_warmup_fraction, config.epochs)
    store = multicrop.FeatureStore(n, config.hidden_dim)
    knn = None
    if crops_on and crop_warm == 0:
        # no warm-up: seed the table from the untrained network
        store.record(np.arange(n), encoder.forward(params, dataset.x).h)
        knn = multicrop.compute_knn_table(store, config.knn_k)

    step = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng_shuffle.permutation(n)
        sums: dict[str, float] = {}
        for s in range(spe):
            idx = order[s * config.batch_size:(s + 1) * config.batch_size]
            crop_x = None
            if crops_on:
                sources = multicrop.select_crop_sources(epoch, crop_warm, knn, idx, config.crops_per_sample)
                crop_x = dataset.x[sources.T]
            lr = encoder.lr_schedule(step, warm, total, config.base_lr)
            res = train_step(params, opt, dataset.x[idx], idx, config, crop_x,
                             lr=lr, rng_views=rng_views, rng_crops=rng_crops, store=store, hook=hook)
            params, opt = res.params, res.opt_state
            for k, v in res.metrics.items():
                sums[k] = sums.get(k, 0.0) + v
            step += 1
        rest = order[spe * config.batch_size:]
        if rest.size:
            # dropped remainder still needs fresh features for the KNN table
            x_rest = synthdata.augment(dataset.x[rest], config.view_strength, rng_views)
            store.record(rest, encoder.forward(params, x_rest).h)
        if crops_on:
            knn = multicrop.compute_knn_table(store, config.knn_k)
        means = {k: v / spe for k, v in sums.items()}
        em = EpochMetrics(epoch=epoch, wall_time=time.perf_counter() - started, **means)
        result.metrics.append(em)
        if log is not None:
            log(em)
    result.params = params
    result.knn = knn
    return result


def embed(params: encoder.ModelParams, x) -> np.ndarray:
    """Backbone features of un-augmented inputs."""
    return encoder.forward(params, x).h


def evaluate(params: encoder.ModelParams, dataset: synthdata.Dataset, train_fraction: float = 0.5, seed: int = 0) -> float:
    return synthdata.linear_probe(embed(params, dataset.x), dataset.labels, train_fraction, seed)
