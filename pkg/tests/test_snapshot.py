import pytest

from skipgraph_sim.config import SimulationConfig
from skipgraph_sim.snapshot import (
    EventLog,
    EventRecord,
    LogCorruption,
    RecordKind,
    SnapshotStore,
    build_event_log,
    obtain_snapshot,
)
from skipgraph_sim.topology import generate_topology


def cfg(**kw):
    base = dict(
        simulation_type="BLOCKCHAIN", protocol="LIGHTCHAIN", topologies=2, system_capacity=64, lifetime=12,
        txb_rate=1, churn_model="FAST_DEBIAN", churn_type="ADVERSARIAL", malicious=0.16,
    )
    base.update(kw)
    return SimulationConfig(**base)


def test_within_slot_order():
    recs = [EventRecord(RecordKind.QUERY, 1, 5), EventRecord(RecordKind.CHURN_LEAVE, 0),
            EventRecord(RecordKind.CHURN_JOIN, 9), EventRecord(RecordKind.QUERY, 1, 2)]
    assert [(r.kind.name, r.node, r.value) for r in sorted(recs)] == [
        ("CHURN_JOIN", 9, 0), ("CHURN_LEAVE", 0, 0), ("QUERY", 1, 2), ("QUERY", 1, 5)]


def test_log_matches_churn_and_online_set():
    topo = generate_topology(cfg(), 0)
    log = build_event_log(topo, 42)
    online = set()
    for slot, records in enumerate(log.slots):
        assert records == sorted(records)
        joins, leaves = topo.churn.events_at(slot)
        assert [r.node for r in records if r.kind == RecordKind.CHURN_JOIN] == joins
        assert [r.node for r in records if r.kind == RecordKind.CHURN_LEAVE] == leaves
        online |= set(joins)
        online -= set(leaves)
        assert [r.node for r in records if r.kind == RecordKind.QUERY] == sorted(online)
        assert all(r.kind != RecordKind.TXB_CREATE for r in records)


def test_text_roundtrip_and_digest():
    log = build_event_log(generate_topology(cfg(), 1), 42)
    back = EventLog.from_text(log.text(), 12)
    assert back == log and back.digest() == log.digest()
    assert log.text().splitlines()[0] == "slot\tkind\tnode\tpayload"


@pytest.mark.parametrize(
    "line",
    ["0\tCHURN_JOIN\t3\tNUM:4", "0\tQUERY\t3\tFOO:4", "13\tCHURN_JOIN\t3\t-", "0\tWHATEVER\t3\t-", "0\tQUERY\t3"],
)
def test_malformed_lines_are_corruption(line):
    with pytest.raises(LogCorruption):
        EventLog.from_text("slot\tkind\tnode\tpayload\n" + line + "\n", 12)


def test_cache_key_law_same_logs():
    a = cfg()
    b = cfg(malicious=0.0, churn_type="COOPERATIVE", txb_rate=4, simulation_type="STORAGE", protocol="BASIC")
    for i in range(2):
        la = build_event_log(generate_topology(a, i), a.seed)
        lb = build_event_log(generate_topology(b, i), b.seed)
        assert la.digest() == lb.digest()


def test_store_roundtrip(tmp_path):
    c = cfg()
    store = SnapshotStore(tmp_path)
    first = obtain_snapshot(c, 0, store)
    assert not first.cache_hit and store.has(c.cache_key, 0) and not store.has(c.cache_key, 1)
    again = obtain_snapshot(c, 0, store)
    assert again.cache_hit
    assert again.topology == first.topology and again.events == first.events
    d = store.topology_dir(c.cache_key, 0)
    assert sorted(p.name for p in d.iterdir()) == ["churn.tsv", "events.tsv", "manifest.txt", "topology.tsv"]
    manifest = (d / "manifest.txt").read_text()
    assert manifest.startswith(c.cache_key.text()) and "sha256 events.tsv " in manifest


def test_log_false_stores_nothing(tmp_path):
    obtain_snapshot(cfg(log=False), 0, SnapshotStore(tmp_path))
    assert list(tmp_path.iterdir()) == []


def test_tampering_detected_and_repaired(tmp_path, caplog):
    c = cfg()
    store = SnapshotStore(tmp_path)
    store.write_key(c.cache_key)
    snap = obtain_snapshot(c, 0, store)
    events = store.topology_dir(c.cache_key, 0) / "events.tsv"
    events.write_text(events.read_text().replace("QUERY\t", "QUERY\t1", 1))
    assert any("content hash mismatch" in p for p in store.verify_all())
    with pytest.raises(LogCorruption):
        obtain_snapshot(c, 0, store)
    fixed = obtain_snapshot(c, 0, store, repair=True)
    assert "regenerating" in caplog.text
    assert fixed.events == snap.events and store.verify_all() == []


def test_consistent_hashes_but_disagreeing_churn_is_corruption(tmp_path):
    c = cfg()
    store = SnapshotStore(tmp_path)
    snap = obtain_snapshot(c, 0, store)
    # rebuild the log with one churn record removed and re-save under a valid manifest
    slot = next(s for s, recs in enumerate(snap.events.slots) if s and any(r.kind == RecordKind.CHURN_LEAVE for r in recs))
    bad = [list(recs) for recs in snap.events.slots]
    bad[slot] = [r for r in bad[slot] if r.kind != RecordKind.CHURN_LEAVE]
    snap.events = EventLog(bad)
    store.save(c.cache_key, snap)
    with pytest.raises(LogCorruption, match="disagree"):
        store.load(c.cache_key, 0, c.seed, c.lifetime)


def test_missing_file_reported(tmp_path):
    c = cfg()
    store = SnapshotStore(tmp_path)
    store.write_key(c.cache_key)
    obtain_snapshot(c, 1, store)
    (store.topology_dir(c.cache_key, 1) / "churn.tsv").unlink()
    assert store.verify_all() == [f"{store.topology_dir(c.cache_key, 1)}: missing churn.tsv"]


def test_entries_list_keys(tmp_path):
    store = SnapshotStore(tmp_path)
    for life in (12, 24):
        c = cfg(lifetime=life)
        store.write_key(c.cache_key)
    texts = [text for _, text in store.entries()]
    assert sorted(texts) == sorted(cfg(lifetime=l).cache_key.text() for l in (12, 24))
