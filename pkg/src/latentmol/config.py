"""Run configuration: a JSON document with explicit defaults and no unknown keys."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from latentmol.errors import ConfigError
from latentmol.models import BetaSchedule, TrainConfig, VaeConfig
from latentmol.oracles import Objective, OracleSpec, default_objective, default_oracles
from latentmol.surrogate import SurrogateConfig

TOKENIZERS = ("selfies", "group_selfies")
SURROGATE_MODES = ("sequential", "joint")


@dataclass
class ModelSection:
    latent_dim: int = 64
    hidden: int = 128
    layers: int = 2
    heads: int = 4
    max_len: int = 72
    denoise_rate: float = 0.15


@dataclass
class TrainSection:
    steps: int = 5000
    batch_size: int = 64
    lr: float = 1e-3
    beta_max: float = 0.1
    cycle: int = 1000
    ramp: float = 0.5


@dataclass
class SurrogateSection:
    hidden: int = 128
    steps: int = 2000
    batch_size: int = 128
    lr: float = 1e-3
    holdout: float = 0.1
    n_samples: int = 2000
    gamma: float = 1.0


@dataclass
class OptimizeSection:
    n_starts: int = 10_000
    steps: int = 50
    lr: float = 0.1
    top_k: int = 100
    iterations: int = 10


@dataclass
class AnalysisSection:
    k: int = 5
    extent: float = 3.0
    resolution: int = 21
    evaluator: str = "oracle"


@dataclass
class PathsSection:
    corpus: str | None = None
    properties: str | None = None
    vocab: str | None = None
    group_dict: str | None = None
    eval_corpus: str | None = None
    output: str = "run"


_SECTIONS = {
    "model": ModelSection,
    "train": TrainSection,
    "surrogate": SurrogateSection,
    "optimize": OptimizeSection,
    "analysis": AnalysisSection,
    "paths": PathsSection,
}
_INPUT_PATHS = ("corpus", "properties", "vocab", "group_dict", "eval_corpus")


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    tokenizer: str = "selfies"
    decoder: str = "nar"
    surrogate_mode: str = "sequential"
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    optimize: OptimizeSection = field(default_factory=OptimizeSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    objective: list[dict] = field(default_factory=lambda: default_objective().as_list())
    oracles: list[dict] = field(default_factory=lambda: [s.as_dict() for s in default_oracles()])
    paths: PathsSection = field(default_factory=PathsSection)

    # ----------------------------------------------------------- typed views

    def vae_config(self) -> VaeConfig:
        m = self.model
        return VaeConfig(self.decoder, m.latent_dim, m.hidden, m.layers, m.heads, m.max_len, m.denoise_rate)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(t.steps, t.batch_size, t.lr, self.seed, BetaSchedule(t.beta_max, t.cycle, t.ramp))

    def surrogate_config(self) -> SurrogateConfig:
        s = self.surrogate
        return SurrogateConfig(s.hidden, s.steps, s.batch_size, s.lr, s.holdout)

    def objective_spec(self) -> Objective:
        return Objective.parse(self.objective)

    def oracle_specs(self) -> list[OracleSpec]:
        return [OracleSpec.parse(o) for o in self.oracles]

    def validate(self) -> None:
        if self.tokenizer not in TOKENIZERS:
            raise ConfigError(f"tokenizer must be one of {TOKENIZERS}")
        if self.surrogate_mode not in SURROGATE_MODES:
            raise ConfigError(f"surrogate_mode must be one of {SURROGATE_MODES}")
        if self.tokenizer == "group_selfies" and not self.paths.group_dict:
            raise ConfigError("tokenizer group_selfies needs paths.group_dict")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.surrogate.n_samples < 1 or self.surrogate.gamma < 0:
            raise ConfigError("surrogate.n_samples must be >= 1 and gamma >= 0")
        o = self.optimize
        if o.n_starts < 1 or o.steps < 0 or not o.lr > 0 or o.top_k < 1 or o.iterations < 1:
            raise ConfigError("optimize section holds an out-of-range value")
        a = self.analysis
        if a.k < 1 or a.resolution < 2 or not a.extent > 0 or a.evaluator not in ("oracle", "surrogate"):
            raise ConfigError("analysis section holds an out-of-range value")
        self.vae_config()
        self.train_config()
        self.surrogate_config()
        objective = self.objective_spec()
        names = {s.name for s in self.oracle_specs()}
        missing = [n for n in objective.names if n not in names]
        if missing:
            raise ConfigError(f"objective terms {missing} have no configured oracle")

    def as_dict(self) -> dict[str, Any]:
        return _to_dict(self)

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def input_path(self, name: str) -> Path | None:
        value = getattr(self.paths, name)
        return Path(value) if value else None

    @property
    def output(self) -> Path:
        return Path(self.paths.output)


def _to_dict(obj) -> Any:
    if is_dataclass(obj):
        return {f.name: _to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, list):
        return [_to_dict(x) for x in obj]
    return obj


def _coerce(name: str, value, default):
    if isinstance(default, bool) or default is None:
        return value
    if isinstance(default, int) and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, str) and isinstance(value, str):
        return value
    raise ConfigError(f"{name}: expected {type(default).__name__}, got {value!r}")


def _fill(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    base = cls()
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = v if v is None else _coerce(f"{where}.{k}", v, getattr(base, k))
    return cls(**kwargs)


def from_dict(data: dict, base_dir: Path | None = None, check_paths: bool = True) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    base = RunConfig()
    kwargs: dict[str, Any] = {}
    for k, v in data.items():
        if k in _SECTIONS:
            kwargs[k] = _fill(_SECTIONS[k], v, k)
        elif k in ("objective", "oracles"):
            if not isinstance(v, list) or not all(isinstance(x, dict) for x in v):
                raise ConfigError(f"{k} must be a list of objects")
            kwargs[k] = [dict(x) for x in v]
        else:
            kwargs[k] = _coerce(k, v, getattr(base, k))
    cfg = RunConfig(**kwargs)
    if base_dir is not None:
        for name in _INPUT_PATHS + ("output",):
            value = getattr(cfg.paths, name)
            if value and not Path(value).is_absolute():
                setattr(cfg.paths, name, str(base_dir / value))
    cfg.validate()
    if check_paths:
        for name in _INPUT_PATHS:
            p = cfg.input_path(name)
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{name} does not exist: {p}")
    return cfg


def apply_env(cfg: RunConfig, env: dict[str, str] | None = None) -> RunConfig:
    """``LATENTMOL_SEED`` and ``LATENTMOL_WORKERS`` override the file."""
    env = os.environ if env is None else env
    for var, attr in (("LATENTMOL_SEED", "seed"), ("LATENTMOL_WORKERS", "workers")):
        if var in env:
            try:
                setattr(cfg, attr, int(env[var]))
            except ValueError:
                raise ConfigError(f"{var} must be an integer, got {env[var]!r}") from None
    cfg.validate()
    return cfg


def load_config(path: str | Path | None, env: dict[str, str] | None = None) -> RunConfig:
    if path is None:
        return apply_env(from_dict({}), env)
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return apply_env(from_dict(data, base_dir=path.parent), env)
