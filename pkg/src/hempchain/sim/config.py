"""Simulation parameters for one hemp season."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

SECONDS_PER_DAY = 86400.0

TWO_LAYER = "two_layer"
SINGLE_CHAIN = "single_chain"
WITH_BLOCKCHAIN = "with_blockchain"
WITHOUT_BLOCKCHAIN = "without_blockchain"
CHAIN_MODES = (TWO_LAYER, SINGLE_CHAIN)
INTEGRITY_MODES = (WITH_BLOCKCHAIN, WITHOUT_BLOCKCHAIN)

# uniform (low, high) ranges in days
DEFAULT_STAGES = {
    "start": (0.0, 30.0),
    "seed_transit": (1.0, 3.0),
    "germination": (5.0, 10.0),
    "holding": (2.0, 2.0),
    "soil_preparation": (1.0, 2.0),
    "transplant": (1.0, 2.0),
    "cultivation": (50.0, 60.0),
    "pre_harvest_test": (2.0, 7.0),
    "harvest_delay": (1.0, 10.0),
    "harvest": (1.0, 3.0),
    "ih_transit": (0.25, 1.0),
    "drying": (1.0, 2.0),
    "dried_transit": (1.0, 2.0),
    "extraction": (1.0, 2.0),
    "winterization": (1.0, 3.0),
    "plc": (1.0, 2.0),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Full-scale resource counts plus a common desk scaling factor.

    ``scale`` multiplies every pool (machines, validators, regulators) and,
    unless ``lot_count`` is given, the 40,000 lots of a full season.
    """

    scale: float = 1 / 40
    lot_count: int | None = None
    full_lot_count: int = 40_000
    field_machines: int = 8_000
    lab_equipment: int = 8_000
    drying_machines: int = 2_400
    processing_machines: int = 1_600
    tamper_probability: float = 0.30
    onsite_mean_days: float = 0.1
    confirmation_mean_days: float = 0.005
    single_chain_verification_mean_days: float = 0.1
    shard_count: int = 4
    validators_per_shard: int = 175
    regulators: int = 50
    shard_interval_s: float = 15.0
    root_interval_s: float = 90.0
    shard_block_capacity: int = 4
    root_block_capacity: int = 24
    single_block_capacity: int = 4
    single_interval_s: float = 90.0
    # calibrated true-violation probabilities, see scripts/calibrate.py and calibration/
    p_thc: float = 0.075
    p_harvest_window: float = 0.11
    p_final_thc: float = 0.020
    stages: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_STAGES))
    seed: int = 0

    def __post_init__(self):
        for name in ("tamper_probability", "p_thc", "p_harvest_window", "p_final_thc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        for name in ("onsite_mean_days", "confirmation_mean_days", "single_chain_verification_mean_days",
                     "shard_interval_s", "root_interval_s", "single_interval_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("shard_count", "shard_block_capacity", "root_block_capacity", "single_block_capacity"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        missing = set(DEFAULT_STAGES) - set(self.stages)
        if missing:
            raise ConfigError(f"missing stage ranges: {sorted(missing)}")
        for name, (lo, hi) in self.stages.items():
            if lo < 0 or hi < lo:
                raise ConfigError(f"bad range for stage {name}: {(lo, hi)}")
        # touching every scaled pool surfaces a zeroed pool at construction time
        self.pools()
        if self.lots <= 0:
            raise ConfigError("lot count must be positive")

    def _scaled(self, name: str, value: int) -> int:
        scaled = int(round(value * self.scale))
        if scaled <= 0:
            raise ConfigError(f"scale {self.scale} leaves no {name}")
        return scaled

    @property
    def lots(self) -> int:
        if self.lot_count is not None:
            return self.lot_count
        return int(round(self.full_lot_count * self.scale))

    def pools(self) -> dict[str, int]:
        return {
            "field_machines": self._scaled("field machines", self.field_machines),
            "lab_equipment": self._scaled("lab equipment", self.lab_equipment),
            "drying_machines": self._scaled("drying machines", self.drying_machines),
            "processing_machines": self._scaled("processing machines", self.processing_machines),
            "validators_per_shard": self._scaled("validators", self.validators_per_shard),
            "regulators": self._scaled("regulators", self.regulators),
        }

    @classmethod
    def desk(cls, **overrides) -> "SimConfig":
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides) -> "SimConfig":
        return cls(**{"scale": 1.0, **overrides})

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)

    def to_mapping(self) -> dict[str, Any]:
        data = asdict(self)
        data["stages"] = {k: list(v) for k, v in self.stages.items()}
        return data

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SimConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown sim config keys: {sorted(unknown)}")
        if "stages" in data:
            stages = dict(DEFAULT_STAGES)
            stages.update({k: tuple(float(x) for x in v) for k, v in data["stages"].items()})
            data["stages"] = stages
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_mapping(data.get("sim", data))
