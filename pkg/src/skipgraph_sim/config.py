"""Simulation parameters and the flat ``Key = Value`` config format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .churn import PRESETS


class ConfigError(ValueError):
    pass


SIMULATION_TYPES = ("BLOCKCHAIN", "STORAGE")
CHURN_TYPES = ("ADVERSARIAL", "COOPERATIVE")
# protocol -> simulation type it belongs to
PROTOCOLS = {"LIGHTCHAIN": "BLOCKCHAIN", "BASIC": "STORAGE"}


@dataclass(frozen=True)
class SimulationConfig:
    simulation_type: str
    protocol: str
    topologies: int
    system_capacity: int
    lifetime: int
    txb_rate: int
    churn_model: str
    churn_type: str
    malicious: float
    log: bool = True
    seed: int = 42
    committee_size: int = 3

    def __post_init__(self):
        if self.simulation_type not in SIMULATION_TYPES:
            raise ConfigError(f"SimulationType must be one of {SIMULATION_TYPES}")
        if self.churn_type not in CHURN_TYPES:
            raise ConfigError(f"ChurnType must be one of {CHURN_TYPES}")
        if self.churn_model not in PRESETS:
            raise ConfigError(f"ChurnModel must be one of {tuple(PRESETS)}")
        if self.topologies < 1:
            raise ConfigError("Topologies must be >= 1")
        if self.system_capacity < 1:
            raise ConfigError("SystemCapacity must be >= 1")
        if self.lifetime < 1:
            raise ConfigError("LifeTime must be >= 1")
        if self.txb_rate < 0:
            raise ConfigError("TXB_RATE must be >= 0")
        if not 0.0 <= self.malicious < 1.0:
            raise ConfigError("Malicious must be in [0, 1)")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("Seed must be in [0, 2^64)")
        if self.committee_size < 1:
            raise ConfigError("CommitteeSize must be >= 1")

    def validate_protocol(self) -> None:
        sim_type = PROTOCOLS.get(self.protocol)
        if sim_type is None:
            raise ConfigError(f"unknown Protocol {self.protocol!r}; known: {sorted(PROTOCOLS)}")
        if sim_type != self.simulation_type:
            raise ConfigError(f"Protocol {self.protocol} belongs to SimulationType {sim_type}")

    @property
    def cache_key(self) -> "CacheKey":
        return CacheKey(self.system_capacity, self.topologies, self.churn_model, self.lifetime, self.seed)

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class CacheKey:
    system_capacity: int
    topologies: int
    churn_model: str
    lifetime: int
    seed: int

    def text(self) -> str:
        return (
            f"SystemCapacity={self.system_capacity}\nTopologies={self.topologies}\n"
            f"ChurnModel={self.churn_model}\nLifeTime={self.lifetime}\nSeed={self.seed}\n"
        )

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()[:16]


# file key -> (field name, parser kind)
KEYS = {
    "SimulationType": ("simulation_type", "enum"),
    "Protocol": ("protocol", "enum"),
    "Topologies": ("topologies", "int"),
    "SystemCapacity": ("system_capacity", "int"),
    "LifeTime": ("lifetime", "int"),
    "TXB_RATE": ("txb_rate", "int"),
    "ChurnModel": ("churn_model", "enum"),
    "ChurnType": ("churn_type", "enum"),
    "Malicious": ("malicious", "float"),
    "LOG": ("log", "bool"),
    "Seed": ("seed", "int"),
    "CommitteeSize": ("committee_size", "int"),
}
OPTIONAL = {"LOG", "Seed", "CommitteeSize"}
KEY_FIELDS = {"SystemCapacity", "Topologies", "ChurnModel", "LifeTime", "Seed"}

ENUMS = {
    "SimulationType": SIMULATION_TYPES,
    "Protocol": tuple(PROTOCOLS),
    "ChurnModel": tuple(PRESETS),
    "ChurnType": CHURN_TYPES,
}


def parse_value(key: str, raw: str, lineno: int | None = None):
    where = f"line {lineno}: " if lineno is not None else ""
    if key not in KEYS:
        raise ConfigError(f"{where}unknown key {key!r}")
    _, kind = KEYS[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
    except ValueError:
        raise ConfigError(f"{where}{key}: cannot parse {raw!r} as {kind}") from None
    if raw not in ENUMS[key]:
        raise ConfigError(f"{where}{key}: unknown value {raw!r}; expected one of {ENUMS[key]}")
    return raw


def parse_config(text: str) -> SimulationConfig:
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip().rstrip(";").strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'Key = Value', got {raw_line.strip()!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        values[key] = parse_value(key, raw, lineno)
        lines[key] = lineno
    missing = [k for k in KEYS if k not in values and k not in OPTIONAL]
    if missing:
        raise ConfigError(f"missing mandatory keys: {', '.join(missing)}")
    kwargs = {KEYS[k][0]: v for k, v in values.items()}
    try:
        return SimulationConfig(**kwargs)
    except ConfigError as exc:
        key = next((k for k in lines if KEYS[k][0] in str(exc) or k in str(exc)), None)
        if key is not None:
            raise ConfigError(f"line {lines[key]}: {exc}") from None
        raise


def serialize_config(config: SimulationConfig) -> str:
    out = []
    for key, (name, kind) in KEYS.items():
        value = getattr(config, name)
        if kind == "bool":
            value = "true" if value else "false"
        elif kind == "float":
            value = repr(value)
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def apply_overrides(config: SimulationConfig, overrides: dict[str, str]) -> SimulationConfig:
    """Replace non-key fields; key fields would change the event log and are refused."""
    changes = {}
    for key, raw in overrides.items():
        if key in KEY_FIELDS:
            raise ConfigError(
                f"cannot override {key} on replay: it is part of the snapshot cache key "
                "and changing it requires regenerating the event log (use 'run')"
            )
        changes[KEYS[key][0] if key in KEYS else key] = parse_value(key, raw)
    return config.replace(**changes)
