"""Flat ``key = value`` run configuration files.

One pair per line; ``#`` starts a comment; blank lines are skipped. Keys
are the :class:`~wcl.trainer.TrainConfig` fields plus the run keys below.
Unknown keys are errors.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .synthdata import Dataset, gen_sphere_mixture, load_dataset
from .trainer import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "wcl-out"
    data_path: str | None = None
    data_classes: int = 8
    data_samples: int = 512
    data_dim: int = 16
    data_spread: float = 0.3
    data_seed: int | None = None
    probe_fraction: float = 0.5
    probe_seed: int | None = None

    def dataset(self) -> Dataset:
        if self.data_path:
            return load_dataset(self.data_path)
        seed = self.train.seed if self.data_seed is None else self.data_seed
        return gen_sphere_mixture(self.data_classes, self.data_samples, self.data_dim, self.data_spread, seed)

    def with_beta(self, beta: float) -> "RunConfig":
        return replace(self, train=replace(self.train, beta=beta))

    @property
    def effective_probe_seed(self) -> int:
        return self.train.seed if self.probe_seed is None else self.probe_seed


_RUN_TYPES = {
    "output_dir": str,
    "data_path": str,
    "data_classes": int,
    "data_samples": int,
    "data_dim": int,
    "data_spread": float,
    "data_seed": int,
    "probe_fraction": float,
    "probe_seed": int,
}
_TRAIN_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _convert(key, raw, kind):
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(kind, kind)
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw, 10)
        return kind(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    train_vals: dict = {}
    run_vals: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value in {source}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in _TRAIN_TYPES:
            train_vals[key] = _convert(key, raw, _TRAIN_TYPES[key])
        elif key in _RUN_TYPES:
            run_vals[key] = _convert(key, raw, _RUN_TYPES[key])
        else:
            raise ConfigError(key, "unknown configuration key")
    rc = RunConfig(train=TrainConfig(**train_vals), **run_vals)
    validate(rc)
    return rc


def validate(rc: RunConfig) -> None:
    rc.train.validate()
    if not 0 < rc.probe_fraction < 1:
        raise ConfigError("probe_fraction", "must lie strictly between 0 and 1")
    if rc.data_path is None:
        for key in ("data_classes", "data_samples", "data_dim"):
            if getattr(rc, key) < 2:
                raise ConfigError(key, "must be >= 2")
        if rc.data_samples < rc.data_classes:
            raise ConfigError("data_samples", "must be >= data_classes")
        if not rc.data_spread > 0:
            raise ConfigError("data_spread", "must be positive")
        if rc.data_samples < rc.train.batch_size:
            raise ConfigError("batch_size", "exceeds data_samples")
    elif not os.path.exists(rc.data_path):
        raise ConfigError("data_path", f"{rc.data_path} does not exist")


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, os.fspath(path))
