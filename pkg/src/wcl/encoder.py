"""MLP backbone with two projection heads, exact backprop, SGD and LR schedule.

Layers compute ``x @ W + b`` with ``W`` shaped ``(fan_in, fan_out)``; ReLU
sits between layers of a stack but not after its last layer. Both head
outputs are L2-normalized row-wise.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, MalformedFile, ShapeMismatch, ZeroRowError
from .matkernel import NORM_FLOOR, normalize_backward

Layer = tuple[np.ndarray, np.ndarray]
STACKS = ("backbone", "head_g", "head_phi")
WCLM_MAGIC = b"WCLM"


@dataclass
class ModelParams:
    backbone: list[Layer]
    head_g: list[Layer]
    head_phi: list[Layer]

    def __post_init__(self):
        for name in STACKS:
            _check_chain(name, getattr(self, name))
        if [w.shape for w, _ in self.head_g] != [w.shape for w, _ in self.head_phi]:
            raise ShapeMismatch("head_g and head_phi must share layer shapes")
        if self.head_g[0][0].shape[0] != self.backbone[-1][0].shape[1]:
            raise ShapeMismatch("head input width must equal backbone output width")

    def arrays(self) -> list[np.ndarray]:
        """Every parameter array in a fixed order (stack, layer, W then b)."""
        out = []
        for name in STACKS:
            for w, b in getattr(self, name):
                out.extend((w, b))
        return out

    def map(self, fn) -> "ModelParams":
        return ModelParams(*[[(fn(w), fn(b)) for w, b in getattr(self, name)] for name in STACKS])

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    @property
    def in_dim(self) -> int:
        return self.backbone[0][0].shape[0]


def _check_chain(name, layers):
    if not layers:
        raise ShapeMismatch(f"{name} needs at least one layer")
    for i, (w, b) in enumerate(layers):
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ShapeMismatch(f"{name}[{i}] has W {w.shape} and b {b.shape}")
        if i and layers[i - 1][0].shape[1] != w.shape[0]:
            raise ShapeMismatch(f"{name}[{i}] input {w.shape[0]} != previous output {layers[i - 1][0].shape[1]}")


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(in_dim: int, hidden_dim: int, proj_dim: int, rng, head_hidden: int | None = None) -> ModelParams:
    """Two-layer backbone ``in -> hidden -> hidden`` and two ``hidden -> head_hidden -> proj`` heads."""
    head_hidden = head_hidden or hidden_dim

    def stack(dims):
        return [(_glorot(rng, a, b), np.zeros(b)) for a, b in zip(dims[:-1], dims[1:])]

    backbone = stack([in_dim, hidden_dim, hidden_dim])
    head_g = stack([hidden_dim, head_hidden, proj_dim])
    head_phi = stack([hidden_dim, head_hidden, proj_dim])
    return ModelParams(backbone, head_g, head_phi)


def _mlp_forward(layers, x):
    inputs = []
    pre = None
    for i, (w, b) in enumerate(layers):
        inputs.append(x)
        pre = x @ w + b
        x = np.maximum(pre, 0.0) if i < len(layers) - 1 else pre
    return pre, inputs


def _mlp_backward(layers, inputs, grad_out):
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        x = inputs[i]
        grads[i] = (x.T @ g, g.sum(axis=0))
        if i > 0:
            g = (g @ w.T) * (x > 0)
        else:
            g = g @ w.T
    return grads, g


def _normalize(u):
    norms = np.linalg.norm(u, axis=1)
    if np.any(norms < NORM_FLOOR):
        raise ZeroRowError("projection head produced a zero row")
    return u / norms[:, None], norms


@dataclass
class ForwardTrace:
    h: np.ndarray
    z: np.ndarray
    v: np.ndarray
    z_norms: np.ndarray
    v_norms: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


def forward(p: ModelParams, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.in_dim:
        raise DimensionMismatch(f"input has shape {x.shape}, model expects {p.in_dim} columns")
    h, bb_in = _mlp_forward(p.backbone, x)
    gz, g_in = _mlp_forward(p.head_g, h)
    pv, phi_in = _mlp_forward(p.head_phi, h)
    z, zn = _normalize(gz)
    v, vn = _normalize(pv)
    return ForwardTrace(h, z, v, zn, vn, {"backbone": bb_in, "head_g": g_in, "head_phi": phi_in})


def backward(p: ModelParams, trace: ForwardTrace, dz=None, dv=None, dh_extra=None) -> ModelParams:
    """Parameter gradients of ``<dz, z> + <dv, v> + <dh_extra, h>``.

    ``None`` stands for a zero upstream gradient; a head that receives no
    gradient gets exact zeros and is not traversed.
    """
    for name, g, ref in (("dz", dz, trace.z), ("dv", dv, trace.v), ("dh_extra", dh_extra, trace.h)):
        if g is not None and np.shape(g) != ref.shape:
            raise ShapeMismatch(f"{name} has shape {np.shape(g)}, expected {ref.shape}")
    dh = np.zeros_like(trace.h) if dh_extra is None else np.array(dh_extra, dtype=np.float64)

    head_grads = {}
    for name, grad, unit, norms in (
        ("head_g", dz, trace.z, trace.z_norms),
        ("head_phi", dv, trace.v, trace.v_norms),
    ):
        layers = getattr(p, name)
        if grad is None:
            head_grads[name] = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
            continue
        du = normalize_backward(unit, norms, np.asarray(grad, dtype=np.float64))
        head_grads[name], dh_head = _mlp_backward(layers, trace.cache[name], du)
        dh += dh_head

    bb_grads, _ = _mlp_backward(p.backbone, trace.cache["backbone"], dh)
    return ModelParams(bb_grads, head_grads["head_g"], head_grads["head_phi"])


def add_grads(a: ModelParams, b: ModelParams) -> ModelParams:
    return ModelParams(
        *[[(wa + wb, ba + bb) for (wa, ba), (wb, bb) in zip(getattr(a, s), getattr(b, s))] for s in STACKS]
    )


@dataclass
class OptimizerState:
    buffers: ModelParams
    momentum: float = 0.9
    weight_decay: float = 1e-6

    @classmethod
    def zeros_like(cls, p: ModelParams, momentum: float = 0.9, weight_decay: float = 1e-6):
        return cls(p.map(np.zeros_like), momentum, weight_decay)


def sgd_step(p: ModelParams, grads: ModelParams, state: OptimizerState, lr: float):
    """Heavy-ball SGD: ``buf = m*buf + g + wd*param``, ``param -= lr*buf``.

    Returns fresh ``(params, state)``; the inputs are left untouched.
    """
    new_layers = {}
    new_bufs = {}
    for s in STACKS:
        layers, bufs = [], []
        for (w, b), (gw, gb), (bw, bb) in zip(getattr(p, s), getattr(grads, s), getattr(state.buffers, s)):
            bw = state.momentum * bw + gw + state.weight_decay * w
            bb = state.momentum * bb + gb + state.weight_decay * b
            layers.append((w - lr * bw, b - lr * bb))
            bufs.append((bw, bb))
        new_layers[s], new_bufs[s] = layers, bufs
    return (
        ModelParams(**new_layers),
        OptimizerState(ModelParams(**new_bufs), state.momentum, state.weight_decay),
    )


def lr_schedule(step: int, warmup_steps: int, total_steps: int, base_lr: float) -> float:
    """Linear warm-up to ``base_lr`` followed by cosine decay to zero at ``total_steps``."""
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    span = total_steps - warmup_steps
    if span <= 0:
        return 0.0
    progress = min(step - warmup_steps, span) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


_U32 = struct.Struct("<I")


def save_checkpoint(path: str | os.PathLike, p: ModelParams) -> None:
    """WCLM: magic, u32 layer counts per stack, then per layer u32 dims, f64 W, f64 b."""
    chunks = [WCLM_MAGIC]
    chunks += [_U32.pack(len(getattr(p, s))) for s in STACKS]
    for s in STACKS:
        for w, b in getattr(p, s):
            chunks.append(struct.pack("<II", *w.shape))
            chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path: str | os.PathLike) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        if blob[:4] != WCLM_MAGIC:
            raise MalformedFile(f"{path}: bad magic {blob[:4]!r}")
        off = 4
        counts = struct.unpack_from("<III", blob, off)
        off += 12
        stacks = {}
        for s, count in zip(STACKS, counts):
            layers = []
            for _ in range(count):
                fan_in, fan_out = struct.unpack_from("<II", blob, off)
                off += 8
                w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=off)
                off += 8 * fan_in * fan_out
                b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=off)
                off += 8 * fan_out
                layers.append((w.reshape(fan_in, fan_out).astype(np.float64), b.astype(np.float64)))
            stacks[s] = layers
    except (struct.error, ValueError) as exc:
        if isinstance(exc, MalformedFile):
            raise
        raise MalformedFile(f"{path}: truncated checkpoint") from exc
    if off != len(blob):
        raise MalformedFile(f"{path}: {len(blob) - off} trailing bytes")
    try:
        return ModelParams(**stacks)
    except ShapeMismatch as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
