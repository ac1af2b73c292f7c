"""Experiment configuration.

Configs are plain JSON objects. Missing keys take the defaults below;
unknown keys are rejected so typos fail loudly. ``to_dict`` always emits
the fully resolved form, which is what gets written next to every run.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .bpl import DENOMINATORS, INIT_METHODS
from .data import SyntheticSpec
from .errors import ConfigError, InvalidArgumentError
from .nn import FRONTS


def _build(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**d)


@dataclass
class DataConfig:
    path: Optional[str] = None
    synthetic: dict = field(default_factory=lambda: SyntheticSpec().to_dict())
    test_fraction: float = 0.25
    split_seed: int = 0

    def synthetic_spec(self) -> SyntheticSpec:
        try:
            return SyntheticSpec.from_dict({**SyntheticSpec().to_dict(), **self.synthetic})
        except (InvalidArgumentError, TypeError) as exc:
            raise ConfigError(f"data.synthetic: {exc}") from exc


@dataclass
class ModelConfig:
    front: str = "bpl"
    n_bases: Optional[int] = None  # defaults to the element dimension F
    width: int = 64
    n_blocks: int = 8
    kernel_size: int = 3
    norm_type: float = 2.0
    denominator: str = "norm"


@dataclass
class InitConfig:
    method: str = "von_mises"
    concentration: float = math.pi
    nmf_iterations: int = 200
    seed: Optional[int] = None  # defaults to the experiment seed


@dataclass
class OptimConfig:
    lr: float = 1e-3
    lr_min: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class GridConfig:
    fronts: list = field(default_factory=lambda: list(FRONTS))
    sizes: list = field(default_factory=lambda: [24, 48, 72])
    initializers: list = field(default_factory=lambda: list(INIT_METHODS))
    seeds: list = field(default_factory=lambda: [0])
    workers: int = 1


@dataclass
class ExperimentConfig:
    seed: int = 0
    steps: int = 2000
    batch_size: int = 16
    threshold: float = 0.5
    log_every: int = 100
    checkpoint_every: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    init: InitConfig = field(default_factory=InitConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    compare: GridConfig = field(default_factory=GridConfig)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ExperimentConfig":
        d = dict(d or {})
        nested = {
            "data": DataConfig,
            "model": ModelConfig,
            "init": InitConfig,
            "optim": OptimConfig,
            "compare": GridConfig,
        }
        parts = {k: _build(c, d.pop(k, None), k) for k, c in nested.items()}
        cfg = _build(cls, d, "config")
        for k, v in parts.items():
            setattr(cfg, k, v)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data"]["synthetic"] = self.data.synthetic_spec().to_dict()
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with top-level or dotted (``model.front``) overrides."""
        d = self.to_dict()
        for key, value in changes.items():
            target = d
            parts = key.split(".")
            for p in parts[:-1]:
                target = target[p]
            if parts[-1] not in target:
                raise ConfigError(f"unknown config key {key!r}")
            target[parts[-1]] = value
        return ExperimentConfig.from_dict(d)

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.steps >= 1, "steps must be >= 1")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(0.0 <= self.threshold <= 1.0, "threshold must be in [0, 1]")
        need(self.log_every >= 1, "log_every must be >= 1")
        need(self.checkpoint_every >= 0, "checkpoint_every must be >= 0")
        need(0.0 <= self.data.test_fraction < 1.0, "data.test_fraction must be in [0, 1)")
        if self.data.path is None:
            try:
                self.data.synthetic_spec().validate()
            except InvalidArgumentError as exc:
                raise ConfigError(f"data.synthetic: {exc}") from exc
        m = self.model
        need(m.front in FRONTS, f"model.front must be one of {FRONTS}")
        need(m.n_bases is None or m.n_bases >= 1, "model.n_bases must be positive")
        need(m.width >= 1 and m.n_blocks >= 0, "model.width and model.n_blocks must be positive")
        need(m.kernel_size >= 1 and m.kernel_size % 2 == 1, "model.kernel_size must be odd")
        need(m.norm_type > 0, "model.norm_type must be positive")
        need(m.denominator in DENOMINATORS, f"model.denominator must be one of {DENOMINATORS}")
        need(self.init.method in INIT_METHODS, f"init.method must be one of {INIT_METHODS}")
        need(self.init.concentration > 0, "init.concentration must be positive")
        o = self.optim
        need(o.lr > 0 and 0 <= o.lr_min <= o.lr, "optim: need 0 <= lr_min <= lr and lr > 0")
        need(0 <= o.beta1 < 1 and 0 <= o.beta2 < 1 and o.eps > 0, "optim: invalid Adam constants")
        g = self.compare
        need(all(f in FRONTS for f in g.fronts), f"compare.fronts must be drawn from {FRONTS}")
        need(all(int(s) >= 1 for s in g.sizes), "compare.sizes must be positive")
        need(all(i in INIT_METHODS for i in g.initializers), f"compare.initializers must be drawn from {INIT_METHODS}")
        need(len(g.seeds) >= 1 and g.workers >= 1, "compare needs at least one seed and one worker")

    @property
    def init_seed(self) -> int:
        return self.seed if self.init.seed is None else self.init.seed
