"""TOML run configuration with strict key checking."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .anfis import HybridTrainConfig
from .mpc import DEFAULT_TS, MpcConstraints, MpcParams
from .nn import TrainConfig
from .pso import PsoConfig
from .scenarios import BUILTIN_SCENARIOS
from .vehicle import VehicleParams


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted location of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class MpcSection:
    np: int = 35
    nc: int = 8
    q: float = 10.0
    r: float = 0.01
    ts: float = DEFAULT_TS
    du_max: float = math.pi / 12
    u_max: float = math.pi / 6

    def __post_init__(self):
        MpcParams(self.np, self.nc, self.q, self.r)
        MpcConstraints(self.du_max, self.u_max)
        if not 0 < self.ts <= 0.1:
            raise ValueError("ts must lie in (0, 0.1]")

    @property
    def params(self) -> MpcParams:
        return MpcParams(self.np, self.nc, self.q, self.r)

    @property
    def constraints(self) -> MpcConstraints:
        return MpcConstraints(self.du_max, self.u_max)


@dataclass(frozen=True)
class GridSection:
    n_vx: int = 8
    n_yref: int = 8
    n_mu: int = 10
    n_wind: int = 10

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be >= 1")


@dataclass(frozen=True)
class ScenarioSection:
    name: str = "triple-lane-change"
    adapter_every: int = 1

    def __post_init__(self):
        if self.name not in BUILTIN_SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {BUILTIN_SCENARIOS}")
        if self.adapter_every < 1:
            raise ValueError("adapter_every must be >= 1")


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    output_dir: str = "runs"
    workers: int = 1
    dataset: str = ""

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    mpc: MpcSection = field(default_factory=MpcSection)
    pso: PsoConfig = field(default_factory=PsoConfig)
    grid: GridSection = field(default_factory=GridSection)
    nn: TrainConfig = field(default_factory=TrainConfig)
    anfis: HybridTrainConfig = field(default_factory=HybridTrainConfig)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)

    def with_seed(self, seed: int) -> "RunConfig":
        """Propagate one seed to every stochastic stage."""
        return dataclasses.replace(
            self, run=dataclasses.replace(self.run, seed=seed),
            pso=dataclasses.replace(self.pso, seed=seed),
            nn=dataclasses.replace(self.nn, seed=seed),
            anfis=dataclasses.replace(self.anfis, seed=seed))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}


def _coerce(path: str, f: dataclasses.Field, value):
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if isinstance(default, bool) or isinstance(value, bool):
        if not isinstance(value, type(default)):
            raise ConfigError(path, f"expected {type(default).__name__}, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(path, f"expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    return value


def config_from_dict(doc: dict) -> RunConfig:
    sections = {}
    for name, section in doc.items():
        if name not in SECTIONS:
            raise ConfigError(name, "unknown section")
        if not isinstance(section, dict):
            raise ConfigError(name, "expected a table")
        cls = SECTIONS[name]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in section.items():
            if key not in fields:
                raise ConfigError(f"{name}.{key}", "unknown key")
            kwargs[key] = _coerce(f"{name}.{key}", fields[key], value)
        try:
            sections[name] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(name, str(exc)) from None
    return RunConfig(**sections)


def load_config(path=None) -> RunConfig:
    """Defaults when ``path`` is None; otherwise the file overrides them key by key."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not valid TOML ({exc})") from None
    return config_from_dict(doc)
