"""Simulation engine: snapshot acquisition, the timeslot loop, and aggregation."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError, SimulationConfig, apply_overrides
from .evaluators import (
    AvailabilityEvaluator,
    EvaluatorReport,
    LatencyEvaluator,
    SuccessRatioEvaluator,
    merge_reports,
)
from .overlay import Overlay, SearchResult, int_to_bits
from .rng import derive_rng, draw_unique_ids, draw_vectors
from .scenarios import SCENARIOS, NodeView, RoutingMedium, Scenario
from .snapshot import (
    EventLog,
    EventRecord,
    LogCorruption,
    RecordKind,
    Snapshot,
    SnapshotStore,
    obtain_snapshot,
)
from .topology import Topology, latency

log = logging.getLogger(__name__)


class SnapshotMissing(RuntimeError):
    pass


@dataclass
class TopologyState:
    topology: Topology
    overlay: Overlay
    malicious: set[int]
    host: list[int]
    medium: RoutingMedium
    probe_rng: object
    latency_ev: LatencyEvaluator
    success_ev: SuccessRatioEvaluator
    availability_ev: AvailabilityEvaluator
    peers: int = 0


@dataclass
class SlotMeasurements:
    slot: int
    queries: int = 0
    failed_queries: int = 0
    probes: int = 0
    emitted: list[EventRecord] = field(default_factory=list)


@dataclass
class TopologyOutcome:
    index: int
    metrics: dict[str, tuple[float | None, int]]
    events_hash: str
    cache_hit: bool


def assign_malicious(config: SimulationConfig, index: int) -> set[int]:
    count = int(config.malicious * config.system_capacity)
    if count == 0:
        return set()
    rng = derive_rng(config.seed, index, "malicious-assignment")
    return {int(i) for i in rng.choice(config.system_capacity, size=count, replace=False)}


def make_scenario(config: SimulationConfig) -> Scenario:
    config.validate_protocol()
    return SCENARIOS[config.protocol](config)


def init_state(config: SimulationConfig, topology: Topology) -> TopologyState:
    """Fresh per-topology state: every peer offline, no data objects yet."""
    overlay = topology.build_overlay()
    n, idx, seed = topology.size, topology.topology_index, config.seed
    # data-object identifiers continue the streams that produced the peers'
    id_rng = derive_rng(seed, idx, "numid")
    draw_unique_ids(id_rng, n, set())
    vec_rng = derive_rng(seed, idx, "memvec")
    draw_vectors(vec_rng, n, topology.vec_len)
    malicious = assign_malicious(config, idx)
    host = list(range(n))
    medium = RoutingMedium(overlay, malicious, id_rng, vec_rng, host)
    places = topology.placements

    def link_latency(a: int, b: int) -> float:
        return latency(places[host[a]], places[host[b]])

    return TopologyState(
        topology=topology,
        overlay=overlay,
        malicious=malicious,
        host=host,
        medium=medium,
        probe_rng=derive_rng(seed, idx, "probe"),
        latency_ev=LatencyEvaluator(link_latency),
        success_ev=SuccessRatioEvaluator(),
        availability_ev=AvailabilityEvaluator(),
        peers=n,
    )


def _view(state: TopologyState, index: int) -> NodeView:
    ov = state.overlay
    return NodeView(
        index,
        ov.num_id[index],
        int_to_bits(ov.mem_vec[index], ov.L),
        index in state.malicious,
        lambda: ov.node(index).table,
    )


def step(
    state: TopologyState,
    slot: int,
    records: list[EventRecord],
    scenario: Scenario,
    config: SimulationConfig,
) -> SlotMeasurements:
    """Play one slot of the event log through the overlay and the scenario."""
    if not 0 <= slot < config.lifetime:
        raise ValueError(f"slot {slot} outside [0, {config.lifetime})")
    ov = state.overlay
    n = state.peers
    out = SlotMeasurements(slot)
    leave = ov.leave_cooperative if config.churn_type == "COOPERATIVE" else ov.leave_adversarial
    scenario.on_slot_begin(slot)
    # nodes whose join could not locate a position try again each slot
    ov.retry_isolated()
    isolated = ov.isolated
    for rec in records:
        if not 0 <= rec.node < n:
            raise LogCorruption(f"slot {slot}: record names unknown node {rec.node}")
        kind = rec.kind
        if kind == RecordKind.CHURN_JOIN:
            ov.insert_node(rec.node)
        elif kind == RecordKind.CHURN_LEAVE:
            leave(rec.node)
        elif kind == RecordKind.QUERY:
            if rec.node in isolated:
                res = SearchResult(rec.node, False, [rec.node], failed=True)
            elif not ov.online[rec.node]:
                raise LogCorruption(f"slot {slot}: query from offline node {rec.node}")
            else:
                res = ov.search_by_num_id(rec.node, rec.value)
            out.queries += 1
            out.failed_queries += res.failed
            state.latency_ev.feed(res)
            state.success_ev.feed(res)
            scenario.on_query_complete(res)
        else:
            raise LogCorruption(f"slot {slot}: {kind.name} records are emitted during play, not logged")
    for i in range(n):
        if ov.online[i]:
            out.emitted.extend(scenario.on_node_act(_view(state, i), slot))
    # isolated peers still probe; they just cannot reach anything
    up_peers = [i for i in range(n) if ov.online[i] or i in isolated]
    n_objects = len(ov) - n
    if n_objects and up_peers:
        picks = state.probe_rng.integers(0, n_objects, size=len(up_peers))
        online, host, ids = ov.online, state.host, ov.num_id
        for peer, pick in zip(up_peers, picks):
            obj = n + int(pick)
            reached = online[peer] and _reaches(ov, peer, ids[obj], obj)
            state.availability_ev.feed(reached, online[host[obj]])
            out.probes += 1
    scenario.on_slot_end(slot)
    return out


def _reaches(ov: Overlay, peer: int, target: int, obj: int) -> bool:
    res = ov.search_by_num_id(peer, target)
    return not res.failed and res.terminal == obj


def simulate_topology(
    config: SimulationConfig, index: int, store_root: str | None, repair: bool = False
) -> TopologyOutcome:
    """Obtain one topology's snapshot and play every slot of it."""
    store = SnapshotStore(store_root) if store_root is not None else None
    snap = obtain_snapshot(config, index, store, repair)
    return play_snapshot(config, snap)


def play_snapshot(config: SimulationConfig, snap: Snapshot) -> TopologyOutcome:
    scenario = make_scenario(config)
    state = init_state(config, snap.topology)
    scenario.bind(state.medium)
    for slot, records in enumerate(snap.events.slots):
        step(state, slot, records, scenario, config)
    metrics: dict[str, tuple[float | None, int]] = {}
    metrics.update(state.latency_ev.values())
    metrics.update(state.success_ev.values())
    metrics.update(state.availability_ev.values())
    metrics.update(scenario.outputs())
    return TopologyOutcome(snap.topology.topology_index, metrics, snap.events.digest(), snap.cache_hit)


@dataclass
class RunResult:
    config: SimulationConfig
    reports: list[EvaluatorReport]
    outcomes: list[TopologyOutcome]

    @property
    def cache_hits(self) -> int:
        return sum(o.cache_hit for o in self.outcomes)

    def report(self, metric: str) -> EvaluatorReport:
        return next(r for r in self.reports if r.metric == metric)


def _worker_count(threads: int, jobs: int) -> int:
    if threads <= 0:
        threads = os.cpu_count() or 1
    return max(1, min(threads, jobs))


def run(
    config: SimulationConfig,
    store_root: str | Path | None = None,
    threads: int = 1,
    repair: bool = True,
) -> RunResult:
    """Simulate every topology of ``config`` and aggregate evaluator outputs.

    ``threads`` sets the number of worker processes (0 = one per CPU); it
    never changes any output. A cached snapshot that fails verification is
    regenerated with a warning unless ``repair`` is off, in which case
    :class:`LogCorruption` propagates.
    """
    config.validate_protocol()
    key = config.cache_key
    root = str(store_root) if store_root is not None else None
    if root is not None and config.log:
        SnapshotStore(root).write_key(key)
    indices = range(config.topologies)
    workers = _worker_count(threads, config.topologies)
    if workers == 1:
        outcomes = [simulate_topology(config, i, root, repair) for i in indices]
    else:
        jobs = len(indices)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(simulate_topology, [config] * jobs, indices, [root] * jobs, [repair] * jobs))
    outcomes.sort(key=lambda o: o.index)
    hits = sum(o.cache_hit for o in outcomes)
    if hits == len(outcomes):
        log.info("cache hit: key %s (%d topologies)", key.digest(), hits)
    elif hits:
        log.info("partial cache hit: key %s (%d of %d topologies)", key.digest(), hits, len(outcomes))
    else:
        log.info("cache miss: key %s", key.digest())
    return RunResult(config, merge_reports([o.metrics for o in outcomes]), outcomes)


def replay(
    config: SimulationConfig,
    overrides: dict[str, str],
    store_root: str | Path,
    threads: int = 1,
) -> RunResult:
    """Replay the cached event logs of ``config``'s key under overridden parameters."""
    new = apply_overrides(config, overrides)
    if new.cache_key != config.cache_key:
        raise ConfigError("overrides changed the cache key")
    store = SnapshotStore(store_root)
    if not store.has_all(new.cache_key):
        raise SnapshotMissing(
            f"no complete snapshot for key {new.cache_key.digest()} under {store_root}; run the config first"
        )
    # a replay must play the stored log, never a regenerated one
    return run(new, store_root, threads, repair=False)
