"""Experiment configuration read from a YAML file.

Every block has defaults matching the reference setting (four reporting
delays, alpha = 2, beta = 0.002, cost weights 1 / 0.075 / 0.5), so an empty
file or no file at all reproduces the standard experiments.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import yaml

from .costing import CostParams
from .stochastics import ModelConfig


class ConfigError(ValueError):
    """The configuration file is malformed or contains unknown keys."""


@dataclass
class ModelBlock:
    alphas: List[float] = field(default_factory=lambda: [1.0, 0.6, 0.3, 0.1])
    beta: float = 0.002
    J: Optional[int] = None


@dataclass
class SimulationBlock:
    eta: float = 1.2
    horizon: int = 120
    replicates: int = 10_000
    seed: int = 0
    burn_in: int = 1200
    start: str = "zero"
    max_lag: int = 40


@dataclass
class EstimationBlock:
    T: int = 120
    n: int = 10_000
    eta_min: float = 1.05
    eta_max: float = 1.50
    eta_step: float = 0.05
    b_grid: List[int] = field(default_factory=lambda: [0, 1000, 5000])
    m_max: int = 5


@dataclass
class TrainingBlock:
    samples: int = 3000
    paths_per_sample: int = 256
    start: str = "mixed"
    b_max: float = 6000.0
    m_max: int = 120
    hidden: int = 32
    epochs: int = 300
    batch_size: int = 64
    step_size: float = 3e-3
    optimizer: str = "adam"
    decay_every: int = 100
    decay: float = 0.5
    val_frac: float = 0.1
    warmup_epochs: int = 150
    warmup_T: int = 10
    warmup_step_size: float = 1e-2
    rel_floor: Optional[float] = None
    rel_tol: float = 0.10


@dataclass
class CostBlock:
    kappa_g: float = 1.0
    kappa_b: float = 0.075
    kappa_c: float = 0.5
    lambda_b: float = 1.05
    horizons: List[int] = field(default_factory=lambda: [36, 60, 120])
    R_tau: int = 1310
    bracket: Tuple[float, float] = (1.05, 1.50)
    grid_step: float = 0.005
    n: int = 20_000
    T: int = 240


@dataclass
class ExperimentConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    simulation: SimulationBlock = field(default_factory=SimulationBlock)
    estimation: EstimationBlock = field(default_factory=EstimationBlock)
    training: TrainingBlock = field(default_factory=TrainingBlock)
    cost: CostBlock = field(default_factory=CostBlock)
    output: str = "out"

    def model_config(self) -> ModelConfig:
        return ModelConfig(tuple(self.model.alphas), self.model.beta)

    def cost_params(self) -> CostParams:
        c = self.cost
        return CostParams(c.kappa_g, c.kappa_b, c.kappa_c, c.lambda_b)

    def eta_grid(self) -> np.ndarray:
        e = self.estimation
        k = int(round((e.eta_max - e.eta_min) / e.eta_step))
        return np.round(e.eta_min + e.eta_step * np.arange(k + 1), 6)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Short digest of the full (defaults-filled) configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _fill(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        sub = names[k].type
        if isinstance(sub, str) and sub.endswith("Block"):
            kwargs[k] = _fill(globals()[sub], v, f"{where}.{k}")
        elif k == "bracket":
            kwargs[k] = tuple(float(x) for x in v)
        else:
            kwargs[k] = v
    return cls(**kwargs)


def validate(cfg: ExperimentConfig) -> None:
    try:
        mc = cfg.model_config()
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    if cfg.model.J is not None and cfg.model.J != mc.J:
        raise ConfigError(f"model.J={cfg.model.J} but {len(cfg.model.alphas)} shapes were given")
    try:
        cfg.cost_params()
    except ValueError as exc:
        raise ConfigError(f"cost: {exc}") from exc
    s, e, t, c = cfg.simulation, cfg.estimation, cfg.training, cfg.cost
    checks = [
        (s.eta > 1, "simulation.eta must exceed 1"),
        (s.horizon >= 1 and s.replicates >= 1 and s.burn_in >= 1, "simulation counts must be positive"),
        (e.T >= 1 and e.n >= 2, "estimation.T and estimation.n must be positive"),
        (1 < e.eta_min <= e.eta_max and e.eta_step > 0, "estimation eta grid is invalid"),
        (t.samples >= 10 and t.paths_per_sample >= 1 and t.epochs >= 1, "training sizes must be positive"),
        (t.start in ("stationary", "zero", "mixed", "uniform"), "training.start is not a known start"),
        (1 < c.bracket[0] < c.bracket[1], "cost.bracket must satisfy 1 < lo < hi"),
        (all(h >= 1 for h in c.horizons), "cost.horizons must be positive"),
        (c.R_tau >= 0, "cost.R_tau must be nonnegative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def load_config(path=None) -> ExperimentConfig:
    """Parse ``path`` (YAML); ``None`` gives the defaults."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = _fill(ExperimentConfig, data, "config")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg
