"""
Experiment configuration
JSON documents loaded into dataclasses, with environment overrides.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.generators import MODELS
from src.outcomes import canonical_kind
from src.selection import DEFAULT_N_PRE, MODES

logger = logging.getLogger(__name__)

DEFAULT_METHODS = ["BER+ht", "BER+hajek", "BER+dim", "RI+rdim", "RI+rmat", "AWRI+rdim", "AWRI+rmat"]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration"""


@dataclass
class NetworkSpec:
    model: str = "BA"
    n: int = 600
    seed: int = 0
    params: Dict[str, Any] = field(default_factory=dict)
    file: Optional[str] = None
    directed: bool = False

    @property
    def label(self) -> str:
        return Path(self.file).stem if self.file else self.model


@dataclass
class ModelSpec:
    kind: str = "ugander_mult"
    seed: int = 0
    params: Dict[str, float] = field(default_factory=dict)


@dataclass
class SelectionSpec:
    candidates: Optional[List[str]] = None
    n_pre: int = DEFAULT_N_PRE
    mode: str = "with_cr"
    per_replication: bool = False
    common_random_numbers: bool = False
    dmax_reweight: bool = False


@dataclass
class ExperimentConfig:
    network: NetworkSpec = field(default_factory=NetworkSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    methods: List[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    replications: int = 100
    seed: int = 0
    bernoulli_p: float = 0.5
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    scaling_grid: List[int] = field(default_factory=list)
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.network.file is None and self.network.model.upper() not in MODELS:
            raise ConfigError(f"network.model must be one of {', '.join(MODELS)}, got {self.network.model}")
        if self.network.n < 1:
            raise ConfigError("network.n must be positive")
        try:
            self.model.kind = canonical_kind(self.model.kind)
        except ValueError as e:
            raise ConfigError(str(e))
        if not self.methods:
            raise ConfigError("methods must list at least one method")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 < self.bernoulli_p < 1.0:
            raise ConfigError("bernoulli_p must lie in (0, 1)")
        if self.selection.n_pre < 1:
            raise ConfigError("selection.n_pre must be at least 1")
        if self.selection.mode not in MODES:
            raise ConfigError(f"selection.mode must be one of {', '.join(MODES)}")
        if any(int(n) < 2 for n in self.scaling_grid):
            raise ConfigError("scaling.grid sizes must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["scaling"] = {"grid": data.pop("scaling_grid")}
        return data

    def with_network_size(self, n: int, seed: int) -> "ExperimentConfig":
        return replace(self, network=replace(self.network, n=int(n), seed=int(seed)))


def _section(data: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = data.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be an object")
    return value


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config from a parsed JSON document"""
    known = {"network", "model", "methods", "replications", "seed", "bernoulli_p",
             "selection", "scaling", "workers"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")
    try:
        config = ExperimentConfig(
            network=NetworkSpec(**_section(data, "network")),
            model=ModelSpec(**_section(data, "model")),
            methods=list(data.get("methods", DEFAULT_METHODS)),
            replications=int(data.get("replications", 100)),
            seed=int(data.get("seed", 0)),
            bernoulli_p=float(data.get("bernoulli_p", 0.5)),
            selection=SelectionSpec(**_section(data, "selection")),
            scaling_grid=[int(n) for n in _section(data, "scaling").get("grid", [])],
            workers=int(data.get("workers", 1)),
        )
    except TypeError as e:
        raise ConfigError(f"Invalid config section: {e}")
    return config.validate()


def load_config(path: Union[str, Path, None] = None) -> ExperimentConfig:
    """Read a JSON config (defaults when path is None) and apply env overrides"""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")
        logger.info(f"Loaded config from {path}")
    return apply_env_overrides(config_from_dict(data))


def apply_env_overrides(config: ExperimentConfig) -> ExperimentConfig:
    """NETEXP_WORKERS and NETEXP_N_PRE replace the corresponding config values"""
    workers = os.getenv("NETEXP_WORKERS")
    if workers:
        config.workers = int(workers)
    n_pre = os.getenv("NETEXP_N_PRE")
    if n_pre:
        config.selection.n_pre = int(n_pre)
    return config.validate()
