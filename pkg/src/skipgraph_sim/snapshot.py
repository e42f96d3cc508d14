"""Executable per-slot event logs and the config-keyed snapshot store.

A snapshot holds everything about one topology that does not depend on the
protocol under test: the topology table, its churn trace, and the event log
(churn joins/leaves plus the query schedule). Protocol-side parameters
(Malicious, ChurnType, Protocol, TXB_RATE) are applied at play time, which is
what lets one snapshot be replayed under different settings.
"""

from __future__ import annotations

import hashlib
import logging
import shutil
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from .churn import ChurnTrace
from .config import CacheKey, SimulationConfig
from .rng import derive_rng, draw_uint64
from .topology import Topology, generate_topology

log = logging.getLogger(__name__)

SNAPSHOT_FILES = ("topology.tsv", "churn.tsv", "events.tsv")
EVENTS_HEADER = "slot\tkind\tnode\tpayload"


class RecordKind(IntEnum):
    # declaration order is the within-slot execution order
    CHURN_JOIN = 0
    CHURN_LEAVE = 1
    QUERY = 2
    TXB_CREATE = 3


class LogCorruption(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class EventRecord:
    kind: RecordKind
    node: int
    value: int = 0  # QUERY: numerical-id target; TXB_CREATE: object num_id

    def payload(self) -> str:
        if self.kind == RecordKind.QUERY:
            return f"NUM:{self.value}"
        if self.kind == RecordKind.TXB_CREATE:
            return f"OBJ:{self.value}"
        return "-"

    @classmethod
    def parse(cls, kind: str, node: str, payload: str) -> "EventRecord":
        k = RecordKind[kind]
        if k in (RecordKind.CHURN_JOIN, RecordKind.CHURN_LEAVE):
            if payload != "-":
                raise LogCorruption(f"churn record carries payload {payload!r}")
            return cls(k, int(node))
        prefix, _, value = payload.partition(":")
        if prefix not in ("NUM", "OBJ"):
            raise LogCorruption(f"bad payload {payload!r}")
        return cls(k, int(node), int(value))


@dataclass
class EventLog:
    slots: list[list[EventRecord]]

    @property
    def lifetime(self) -> int:
        return len(self.slots)

    def text(self) -> str:
        lines = [EVENTS_HEADER]
        for slot, records in enumerate(self.slots):
            for r in records:
                lines.append(f"{slot}\t{r.kind.name}\t{r.node}\t{r.payload()}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()

    def count(self, kind: RecordKind) -> int:
        return sum(1 for records in self.slots for r in records if r.kind == kind)

    @classmethod
    def from_text(cls, text: str, lifetime: int) -> "EventLog":
        lines = text.split("\n")
        if lines[0] != EVENTS_HEADER:
            raise LogCorruption("events.tsv: bad header")
        slots: list[list[EventRecord]] = [[] for _ in range(lifetime)]
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            try:
                slot_s, kind, node, payload = line.split("\t")
                slot = int(slot_s)
                if not 0 <= slot < lifetime:
                    raise IndexError(f"slot {slot} outside [0, {lifetime})")
                slots[slot].append(EventRecord.parse(kind, node, payload))
            except (ValueError, KeyError, IndexError) as exc:
                raise LogCorruption(f"events.tsv:{lineno}: {exc}") from None
        return cls(slots)


def build_event_log(topology: Topology, seed: int) -> EventLog:
    """Churn records plus one random numerical-id query per online peer per slot."""
    churn = topology.churn
    rng = derive_rng(seed, topology.topology_index, "query")
    online = [False] * topology.size
    slots = []
    for slot in range(churn.lifetime):
        joins, leaves = churn.events_at(slot)
        records = [EventRecord(RecordKind.CHURN_JOIN, n) for n in joins]
        records += [EventRecord(RecordKind.CHURN_LEAVE, n) for n in leaves]
        for n in joins:
            online[n] = True
        for n in leaves:
            online[n] = False
        initiators = [i for i, up in enumerate(online) if up]
        targets = draw_uint64(rng, len(initiators))
        records += [EventRecord(RecordKind.QUERY, i, t) for i, t in zip(initiators, targets)]
        records.sort()
        slots.append(records)
    return EventLog(slots)


@dataclass
class Snapshot:
    topology: Topology
    events: EventLog
    cache_hit: bool = False


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class SnapshotStore:
    """``<root>/<key digest>/t<index>/{topology.tsv, churn.tsv, events.tsv, manifest.txt}``."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def key_dir(self, key: CacheKey) -> Path:
        return self.root / key.digest()

    def topology_dir(self, key: CacheKey, index: int) -> Path:
        return self.key_dir(key) / f"t{index}"

    def has(self, key: CacheKey, index: int) -> bool:
        return (self.topology_dir(key, index) / "manifest.txt").is_file()

    def has_all(self, key: CacheKey) -> bool:
        return all(self.has(key, i) for i in range(key.topologies))

    def write_key(self, key: CacheKey) -> None:
        d = self.key_dir(key)
        d.mkdir(parents=True, exist_ok=True)
        (d / "key.txt").write_bytes(key.text().encode("utf-8"))

    def save(self, key: CacheKey, snap: Snapshot) -> None:
        index = snap.topology.topology_index
        d = self.topology_dir(key, index)
        tmp = d.with_name(d.name + ".tmp")
        if tmp.exists():
            shutil.rmtree(tmp)
        snap.topology.save(tmp)
        (tmp / "events.tsv").write_bytes(snap.events.text().encode("utf-8"))
        manifest = key.text() + f"TopologyIndex={index}\n"
        manifest += "".join(f"sha256 {name} {_sha256(tmp / name)}\n" for name in SNAPSHOT_FILES)
        (tmp / "manifest.txt").write_bytes(manifest.encode("utf-8"))
        if d.exists():
            shutil.rmtree(d)
        tmp.rename(d)

    def verify(self, key_dir: Path, index_dir: Path) -> list[str]:
        """Problems found in one topology directory (empty when intact)."""
        problems = []
        manifest = index_dir / "manifest.txt"
        if not manifest.is_file():
            return [f"{index_dir}: missing manifest.txt"]
        expected = {}
        for line in manifest.read_text(encoding="utf-8").splitlines():
            if line.startswith("sha256 "):
                _, name, digest = line.split(" ")
                expected[name] = digest
        key_text = (key_dir / "key.txt").read_text(encoding="utf-8") if (key_dir / "key.txt").is_file() else None
        if key_text is not None and not manifest.read_text(encoding="utf-8").startswith(key_text):
            problems.append(f"{index_dir}: manifest key fields differ from key.txt")
        for name in SNAPSHOT_FILES:
            path = index_dir / name
            if name not in expected:
                problems.append(f"{index_dir}: manifest lacks {name}")
            elif not path.is_file():
                problems.append(f"{index_dir}: missing {name}")
            elif _sha256(path) != expected[name]:
                problems.append(f"{index_dir}: content hash mismatch for {name}")
        return problems

    def load(self, key: CacheKey, index: int, seed: int, lifetime: int) -> Snapshot:
        d = self.topology_dir(key, index)
        problems = self.verify(self.key_dir(key), d)
        if problems:
            raise LogCorruption("; ".join(problems))
        try:
            topo = Topology.load(d, index, seed, lifetime)
            events = EventLog.from_text((d / "events.tsv").read_text(encoding="utf-8"), lifetime)
        except (ValueError, IndexError) as exc:
            raise LogCorruption(f"{d}: {exc}") from None
        if not churn_matches_log(topo.churn, events):
            raise LogCorruption(f"{d}: events.tsv churn records disagree with churn.tsv")
        return Snapshot(topo, events, cache_hit=True)

    def entries(self) -> list[tuple[Path, str]]:
        if not self.root.is_dir():
            return []
        out = []
        for d in sorted(self.root.iterdir()):
            if d.is_dir() and (d / "key.txt").is_file():
                out.append((d, (d / "key.txt").read_text(encoding="utf-8")))
        return out

    def verify_all(self) -> list[str]:
        problems = []
        for d, _ in self.entries():
            for sub in sorted(p for p in d.iterdir() if p.is_dir() and p.name.startswith("t") and not p.name.endswith(".tmp")):
                problems += self.verify(d, sub)
        return problems


def obtain_snapshot(
    config: SimulationConfig, index: int, store: SnapshotStore | None, repair: bool = False
) -> Snapshot:
    """Load the cached snapshot for ``config``'s key, or generate (and persist when LOG is set).

    A cached snapshot that fails verification raises :class:`LogCorruption`
    unless ``repair`` is set, in which case it is regenerated and overwritten.
    """
    key = config.cache_key
    if store is not None and store.has(key, index):
        try:
            return store.load(key, index, config.seed, config.lifetime)
        except LogCorruption as exc:
            if not repair:
                raise
            log.warning("snapshot t%d corrupted (%s); regenerating", index, exc)
    topo = generate_topology(config, index)
    snap = Snapshot(topo, build_event_log(topo, config.seed))
    if store is not None and config.log:
        store.save(key, snap)
    return snap


def churn_matches_log(trace: ChurnTrace, events: EventLog) -> bool:
    for slot in range(trace.lifetime):
        joins, leaves = trace.events_at(slot)
        got_j = [r.node for r in events.slots[slot] if r.kind == RecordKind.CHURN_JOIN]
        got_l = [r.node for r in events.slots[slot] if r.kind == RecordKind.CHURN_LEAVE]
        if got_j != joins or got_l != leaves:
            return False
    return True
