"""Deterministic, timeslot-driven Skip Graph simulator."""

from .config import ConfigError, SimulationConfig, parse_config, serialize_config
from .engine import RunResult, SnapshotMissing, replay, run
from .overlay import NodeKind, Overlay, SearchResult

__all__ = [
    "ConfigError",
    "NodeKind",
    "Overlay",
    "RunResult",
    "SearchResult",
    "SimulationConfig",
    "SnapshotMissing",
    "parse_config",
    "replay",
    "run",
    "serialize_config",
]
__version__ = "0.1.0"
