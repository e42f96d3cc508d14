"""Session-based churn traces from named presets.

A node alternates online sessions and offline downtimes whose lengths are
geometric with the preset means. Only the resulting JOIN/LEAVE schedule is
consumed downstream, so the distribution family can be swapped freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ChurnModelPreset:
    name: str
    session_mean: float
    downtime_mean: float
    initial_online_prob: float

    def __post_init__(self):
        if not (self.session_mean > 0 and self.downtime_mean > 0):
            raise ValueError("session and downtime means must be positive")
        if not 0.0 <= self.initial_online_prob <= 1.0:
            raise ValueError("initial online probability must be in [0, 1]")

    @property
    def stationary_online(self) -> float:
        if math.isinf(self.session_mean):
            return 1.0
        return self.session_mean / (self.session_mean + self.downtime_mean)


# slots; stand-ins for trace fits, swap values here
PRESETS: dict[str, ChurnModelPreset] = {
    "FAST_DEBIAN": ChurnModelPreset("FAST_DEBIAN", 12, 12, 0.5),
    "SLOW_DEBIAN": ChurnModelPreset("SLOW_DEBIAN", 48, 24, 0.67),
    "FLATOUT": ChurnModelPreset("FLATOUT", 160, 8, 0.95),
    "NONE": ChurnModelPreset("NONE", math.inf, math.inf, 1.0),
}

JOIN = "JOIN"
LEAVE = "LEAVE"


def get_preset(name: str) -> ChurnModelPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown churn model {name!r}; expected one of {sorted(PRESETS)}") from None


@dataclass
class ChurnTrace:
    """Per-node alternating JOIN/LEAVE slots within ``[0, lifetime)``.

    ``events[i]`` is an increasing list of slots; even positions are JOINs
    and odd positions are LEAVEs.
    """

    lifetime: int
    events: list[list[int]]

    def __post_init__(self):
        self._by_slot: list[tuple[list[int], list[int]]] | None = None

    @property
    def n(self) -> int:
        return len(self.events)

    def _index(self):
        by_slot = [([], []) for _ in range(self.lifetime)]
        for node, slots in enumerate(self.events):
            for k, s in enumerate(slots):
                by_slot[s][k & 1].append(node)
        self._by_slot = by_slot
        return by_slot

    def events_at(self, slot: int) -> tuple[list[int], list[int]]:
        """Nodes joining and leaving at ``slot``, each in ascending index order."""
        if not 0 <= slot < self.lifetime:
            raise IndexError(f"slot {slot} outside [0, {self.lifetime})")
        by_slot = self._by_slot or self._index()
        joins, leaves = by_slot[slot]
        return list(joins), list(leaves)

    def online_at(self, node: int, slot: int) -> bool:
        count = sum(1 for s in self.events[node] if s <= slot)
        return count % 2 == 1

    def rows(self) -> list[tuple[int, int, str]]:
        """(node, slot, event) sorted by slot, node, JOIN before LEAVE."""
        out = []
        for node, slots in enumerate(self.events):
            for k, s in enumerate(slots):
                out.append((s, node, k & 1))
        out.sort()
        return [(node, s, LEAVE if k else JOIN) for s, node, k in out]

    def total(self, event: str) -> int:
        parity = 0 if event == JOIN else 1
        return sum(len(slots[parity::2]) for slots in self.events)

    def save(self, path: Path) -> None:
        lines = ["node\tslot\tevent"]
        lines += [f"{node}\t{slot}\t{ev}" for node, slot, ev in self.rows()]
        path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    @classmethod
    def load(cls, path: Path, n: int, lifetime: int) -> "ChurnTrace":
        events: list[list[int]] = [[] for _ in range(n)]
        with open(path, encoding="utf-8", newline="\n") as fh:
            header = fh.readline().rstrip("\n")
            if header != "node\tslot\tevent":
                raise ValueError(f"{path}: bad header {header!r}")
            for lineno, line in enumerate(fh, start=2):
                node_s, slot_s, ev = line.rstrip("\n").split("\t")
                node, slot = int(node_s), int(slot_s)
                if not 0 <= slot < lifetime:
                    raise ValueError(f"{path}:{lineno}: slot {slot} outside [0, {lifetime})")
                expect = JOIN if len(events[node]) % 2 == 0 else LEAVE
                if ev != expect or (events[node] and events[node][-1] >= slot):
                    raise ValueError(f"{path}:{lineno}: out-of-order {ev} for node {node}")
                events[node].append(slot)
        return cls(lifetime, events)


def generate_churn_trace(
    preset: ChurnModelPreset, lifetime: int, n: int, rng: np.random.Generator
) -> ChurnTrace:
    if lifetime < 1:
        raise ValueError("lifetime must be >= 1")
    if math.isinf(preset.session_mean):
        return ChurnTrace(lifetime, [[0] for _ in range(n)])
    p_leave = 1.0 / preset.session_mean
    p_join = 1.0 / preset.downtime_mean
    starts_online = rng.random(n) < preset.initial_online_prob
    events = []
    for node in range(n):
        slots: list[int] = []
        online = bool(starts_online[node])
        if online:
            slots.append(0)
        t = 0
        while True:
            t += int(rng.geometric(p_leave if online else p_join))
            if t >= lifetime:
                break
            slots.append(t)
            online = not online
        events.append(slots)
    return ChurnTrace(lifetime, events)
