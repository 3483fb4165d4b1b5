"""Trainer and run configuration, with strict (unknown-key rejecting) dict/YAML round-trip."""
from __future__ import annotations

import dataclasses
import difflib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .envs import EnvSpec
from .errors import ConfigError

LEARNERS = ("paac", "nstep-q")
LR_SCHEDULES = ("constant", "linear")
DTYPES = ("float64", "float32")


@dataclass(frozen=True)
class TrainerConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    n_e: int = 32
    n_w: int = 8
    t_max: int = 5
    gamma: float = 0.99
    lr: float = 0.0224
    rms_eps: float = 0.1
    rms_decay: float = 0.99
    beta: float = 0.01
    clip: float = 40.0
    n_max: int = 200_000
    seed: int = 0
    learner: str = "paac"
    hidden: tuple = (64, 64)
    value_coef: float = 0.5
    lr_schedule: str = "constant"
    # epsilon-greedy schedule for the Q learner: eps_start -> eps_end over eps_anneal * n_max
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal: float = 0.5
    eval_every: int = 0          # updates between greedy evaluations; 0 disables
    eval_episodes: int = 30
    checkpoint_every: int = 0    # updates between checkpoints; 0 = only at exit
    return_window: int = 100     # completed episodes averaged into mean_return
    dtype: str = "float64"

    def __post_init__(self):
        if self.n_e < 1 or not 1 <= self.n_w <= self.n_e:
            raise ConfigError(f"need n_e >= 1 and 1 <= n_w <= n_e, got n_e={self.n_e}, n_w={self.n_w}")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.lr < 0 or self.rms_eps <= 0 or not 0.0 <= self.rms_decay < 1.0:
            raise ConfigError("need lr >= 0, rms_eps > 0, 0 <= rms_decay < 1")
        if self.clip <= 0 or self.n_max < 1:
            raise ConfigError("clip and n_max must be positive")
        if self.learner not in LEARNERS:
            raise ConfigError(f"learner must be one of {LEARNERS}, got {self.learner!r}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {DTYPES}")
        if self.return_window < 1:
            raise ConfigError("return_window must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.n_e * self.t_max


@dataclass(frozen=True)
class RunConfig:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    out_dir: str = "runs/default"
    metrics_flush_every: int = 1   # records buffered before a flush


_RUN_KEYS = ("out_dir", "metrics_flush_every")


def _unknown(key: str, known, where: str) -> ConfigError:
    hint = difflib.get_close_matches(key, list(known), n=1, cutoff=0.5)
    msg = f"unknown config key {key!r} in {where}"
    if hint:
        msg += f"; did you mean {hint[0]!r}?"
    return ConfigError(msg)


def _coerce(key: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple)) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value)
        value = tuple(value) if ok else value
    else:  # Optional[int] fields default to None
        ok = value is None or (isinstance(value, int) and not isinstance(value, bool))
    if not ok:
        raise ConfigError(f"config key {key!r}: bad value {value!r} (default is {default!r})")
    return value


def _build(cls, data: dict, where: str, skip=()):
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise _unknown(key, names | set(_RUN_KEYS if cls is TrainerConfig else ()), where)
        kwargs[key] = _coerce(key, value, getattr(defaults, key))
    return kwargs


def env_from_dict(data: dict) -> EnvSpec:
    if not isinstance(data, dict):
        raise ConfigError("'env' must be a mapping")
    return EnvSpec(**_build(EnvSpec, data, "env"))


def trainer_from_dict(data: dict) -> TrainerConfig:
    data = dict(data)
    env = env_from_dict(data.pop("env", {}) or {})
    return TrainerConfig(env=env, **_build(TrainerConfig, data, "trainer config", skip=("env",)))


def run_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    data = dict(data)
    run_kwargs = {}
    for key in _RUN_KEYS:
        if key in data:
            run_kwargs[key] = _coerce(key, data.pop(key), getattr(RunConfig(), key))
    if run_kwargs.get("metrics_flush_every", 1) < 1:
        raise ConfigError("metrics_flush_every must be >= 1")
    return RunConfig(trainer=trainer_from_dict(data), **run_kwargs)


def trainer_to_dict(cfg: TrainerConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["hidden"] = list(cfg.hidden)
    return out


def run_to_dict(cfg: RunConfig) -> dict:
    out = trainer_to_dict(cfg.trainer)
    out["out_dir"] = cfg.out_dir
    out["metrics_flush_every"] = cfg.metrics_flush_every
    return out


def load_run_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    return run_from_dict(data or {})


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(run_to_dict(cfg), sort_keys=False)
