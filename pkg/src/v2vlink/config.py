"""Experiment configuration: one JSON file per experiment.

An empty or absent file means all defaults (10 MHz, 64 subcarriers,
urban-crossing NLOS, the full 40-action space).  Loading rejects unknown
fields and out-of-range values with an error naming the offending field;
save/load round-trips exactly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .agent import TrainConfig
from .baselines import PsoParams, SaParams
from .channel import ScenarioKind, SnrProcess, load_profile_table
from .env import (Action, Game, GameSpec, LinkEnv, LinkModel, N_POWERS,
                  POWER_LEVELS_W)
from .phy import N_MCS, PerModel


class ConfigError(ValueError):
    pass


_SCENARIO_LABELS = tuple(k.value for k in ScenarioKind)


@dataclass
class ExperimentConfig:
    game: int = 2
    scenario: str = "U-NLOS"
    snr_min_db: float = 5.0
    snr_max_db: float = 25.0
    per_rated: float = 0.1
    episode_len: int = 100
    constrain_game1: bool = False
    stochastic_packets: bool = False
    si_mode: str = "features"
    si_feature_noise: float = 0.05
    seeds: tuple = (1, 2, 3)
    output_dir: str = "runs"
    eval_episodes: int = 20
    profile_file: str | None = None
    bandwidth_mhz: float = 10.0
    n_subcarriers: int = 64
    carrier_hz: float = 5.9e9
    lts_slot_s: float = 8e-6
    n_data_symbols: int = 100
    symbol_time_s: float = 8e-6
    overhead_time_s: float = 4e-5
    fixed_mcs_index: int = 2
    fixed_power_index: int = 2
    per_model: PerModel = field(default_factory=PerModel)
    train: TrainConfig = field(default_factory=TrainConfig)
    pso: PsoParams = field(default_factory=PsoParams)
    sa: SaParams = field(default_factory=SaParams)

    def __post_init__(self):
        if self.game not in (1, 2):
            raise ConfigError("game must be 1 or 2")
        if self.scenario not in _SCENARIO_LABELS:
            raise ConfigError(f"scenario must be one of {_SCENARIO_LABELS}")
        if self.snr_max_db <= self.snr_min_db:
            raise ConfigError("snr_max_db must exceed snr_min_db")
        if not 0.0 < self.per_rated <= 1.0:
            raise ConfigError("per_rated must lie in (0, 1]")
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        if self.si_mode not in ("features", "oracle"):
            raise ConfigError("si_mode must be 'features' or 'oracle'")
        if self.si_feature_noise < 0:
            raise ConfigError("si_feature_noise must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if not all(isinstance(s, int) and not isinstance(s, bool)
                   for s in self.seeds):
            raise ConfigError("seeds must be integers")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.bandwidth_mhz <= 0:
            raise ConfigError("bandwidth_mhz must be positive")
        if self.n_subcarriers < 1:
            raise ConfigError("n_subcarriers must be >= 1")
        if not 0 <= self.fixed_mcs_index < N_MCS:
            raise ConfigError("fixed_mcs_index out of range")
        if not 0 <= self.fixed_power_index < N_POWERS:
            raise ConfigError("fixed_power_index out of range")

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.bandwidth_mhz * 1e6 / self.n_subcarriers

    @property
    def fixed_action(self) -> Action:
        return Action(self.fixed_mcs_index, self.fixed_power_index)

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {"per_model": PerModel, "train": TrainConfig, "pso": PsoParams,
           "sa": SaParams}


def _build(cls, raw: dict, prefix: str = ""):
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown field {prefix}{key!r}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        value = raw[f.name]
        if f.name in _NESTED and cls is ExperimentConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"field {f.name!r} must be a mapping")
            value = _build(_NESTED[f.name], value, prefix=f.name + ".")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        where = prefix.rstrip(".") or "config"
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, raw)


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file; empty and whitespace-only files give the
    all-defaults configuration."""
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        return ExperimentConfig()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw)


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(config: ExperimentConfig) -> str:
    """Short digest of the resolved config; insensitive to file-level
    field ordering because it hashes the canonical dump."""
    canon = json.dumps(config.to_dict(), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def make_game(config: ExperimentConfig, game_number: int | None = None
              ) -> GameSpec:
    g = game_number if game_number is not None else config.game
    return GameSpec(Game(g), config.per_rated, config.episode_len,
                    config.constrain_game1)


def make_model(config: ExperimentConfig) -> LinkModel:
    return LinkModel(config.per_model, config.n_data_symbols,
                     config.symbol_time_s, config.overhead_time_s,
                     POWER_LEVELS_W)


def make_env(config: ExperimentConfig, game: GameSpec,
             rng: np.random.Generator) -> LinkEnv:
    table = (load_profile_table(config.profile_file)
             if config.profile_file else None)
    return LinkEnv(
        game, ScenarioKind(config.scenario),
        SnrProcess(config.snr_min_db, config.snr_max_db),
        make_model(config), rng, profile_table=table,
        si_mode=config.si_mode, si_feature_noise=config.si_feature_noise,
        stochastic_packets=config.stochastic_packets,
        n_subcarriers=config.n_subcarriers,
        subcarrier_spacing_hz=config.subcarrier_spacing_hz,
        carrier_hz=config.carrier_hz, lts_slot_s=config.lts_slot_s)
