"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The heavy ones shell out to the CLI and to ``scripts/scale_probe.py`` so
that wall time and peak memory belong to the measured run alone. Expect the
module to take the better part of an hour on one core.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import random
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import invariant_violations, name_search_oracle, num_search_oracle
from skipgraph_sim.config import SimulationConfig
from skipgraph_sim.engine import run
from skipgraph_sim.overlay import Overlay, vector_length
from skipgraph_sim.rng import derive_rng, draw_uint64
from skipgraph_sim.topology import generate_topology

ROOT = Path(__file__).resolve().parents[1]
WEEK_CONFIG = ROOT / "configs" / "blockchain_week.cfg"
PROBE = ROOT / "scripts" / "scale_probe.py"

# P(>= 2 malicious among 3 drawn without replacement), N = 1024, K = floor(0.16 * 1024) = 163
HYPERGEOM_MAJORITY = (math.comb(163, 2) * math.comb(861, 1) + math.comb(163, 3)) / math.comb(1024, 3)


def skipsim(args: list[str], cwd: Path) -> tuple[int, str, float]:
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "skipgraph_sim", *args], cwd=cwd, capture_output=True, text=True)
    return proc.returncode, proc.stderr, time.perf_counter() - t0


def report_rows(out: Path) -> dict[tuple[str, str], tuple[str, int]]:
    rows = list(csv.reader(io.StringIO((out / "report.csv").read_text())))
    return {(m, t): (v, int(n)) for m, t, v, n in rows[1:]}


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def probe(config: Path, capacity: int | None = None) -> dict:
    cmd = [sys.executable, str(PROBE), str(config), "--child"]
    if capacity is not None:
        cmd += ["--capacity", str(capacity)]
    out = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
    return json.loads(out.strip().splitlines()[-1])


# ---------------------------------------------------------------- shared runs


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("acceptance")
    text = WEEK_CONFIG.read_text()
    (d / "week.cfg").write_text(text)
    (d / "week_honest.cfg").write_text(text.replace("Malicious = 0.16", "Malicious = 0.0"))
    return d


@pytest.fixture(scope="module")
def week_run(workdir):
    code, err, elapsed = skipsim(["run", "week.cfg", "--out", "out1", "--threads", "1"], workdir)
    assert code == 0, err
    return {"elapsed": elapsed, "stderr": err, "out": workdir / "out1"}


# ---------------------------------------------------------------- 1: scale


@pytest.fixture(scope="module")
def storage_probes():
    return [probe(ROOT / "configs" / "storage_4096.cfg", n) for n in (1024, 2048, 4096)]


def test_c1_storage_4096_time_and_memory(storage_probes, accept):
    row = storage_probes[-1]
    ok = row["capacity"] == 4096 and row["elapsed_s"] < 600 and row["peak_rss_mb"] < 8 * 1024
    assert accept("C1a storage 4096 nodes x 24 slots", ok,
                  f"{row['elapsed_s']:.1f} s (< 600), peak RSS {row['peak_rss_mb']:.0f} MB (< 8192)")


def test_c1_blockchain_10240_time(accept):
    row = probe(ROOT / "configs" / "blockchain_10240.cfg")
    ok = row["capacity"] == 10240 and row["elapsed_s"] < 900
    assert accept("C1b blockchain 10240 nodes x 8 slots", ok,
                  f"{row['elapsed_s']:.1f} s (< 900), peak RSS {row['peak_rss_mb']:.0f} MB")


def test_c1_memory_exponent(storage_probes, accept):
    n = np.log([r["capacity"] for r in storage_probes])
    extra = [r["peak_rss_mb"] - r["baseline_rss_mb"] for r in storage_probes]
    slope = float(np.polyfit(n, np.log(extra), 1)[0])
    assert accept("C1c memory exponent over 1K/2K/4K", slope <= 1.2,
                  f"slope {slope:.3f} (<= 1.2), extra MB {[round(e, 1) for e in extra]}")


# ---------------------------------------------------------------- 2: scaled demo


def test_c2_week_long_blockchain_run(week_run, accept):
    rows = report_rows(week_run["out"])
    samples = {m: sum(rows[(m, str(i))][1] for i in range(10))
               for m in ("query_latency_ms", "success_ratio", "availability", "adversarial_success")}
    ok = week_run["elapsed"] < 1200 and all(v > 0 for v in samples.values())
    assert accept("C2 week-long blockchain run (10 x 1024 x 168)", ok,
                  f"{week_run['elapsed']:.0f} s (< 1200), samples {samples}")


# ---------------------------------------------------------------- 3: replay / cache law


def test_c3_malicious_zero_rerun(week_run, workdir, accept):
    code, err, _ = skipsim(["run", "week_honest.cfg", "--out", "out0", "--threads", "1"], workdir)
    assert code == 0, err
    hit = "cache hit: key" in err
    first = json.loads((week_run["out"] / "report.json").read_text())["events_hash"]
    second = json.loads((workdir / "out0" / "report.json").read_text())["events_hash"]
    rows = report_rows(workdir / "out0")
    adv = [rows[("adversarial_success", str(i))][0] for i in range(10)] + [rows[("adversarial_success.mean", "AGG")][0]]
    zero = all(v == "0.000000" for v in adv)
    ok = hit and first == second and zero
    assert accept("C3 rerun with Malicious=0.0", ok,
                  f"cache hit logged={hit}, event hashes equal={first == second}, adversarial_success all 0.000000={zero}")


# ---------------------------------------------------------------- 4: overlay properties


def test_c4_insert_leave_invariants(accept):
    checked = sequences = 0
    failures = []
    for seed in range(1000):
        rng = random.Random(seed)
        n = rng.randint(2, 256)
        L = vector_length(n)
        ov = Overlay(L)
        ids = set()
        while len(ids) < n:
            ids.add(rng.getrandbits(64))
        for num_id in ids:
            ov.add_node(num_id, rng.getrandbits(L))
        for _ in range(rng.randint(1, 60)):
            up = [i for i in range(n) if ov.online[i]]
            down = [i for i in range(n) if not ov.online[i]]
            if down and (not up or rng.random() < 0.6):
                ov.insert_node(rng.choice(down))
            else:
                ov.leave_cooperative(rng.choice(up))
            bad = invariant_violations(ov)
            checked += 1
            if bad:
                failures.append((seed, bad[0]))
                break
        sequences += 1
    assert accept("C4a 1000 insert/leave sequences (<= 256 nodes)", sequences == 1000 and not failures,
                  f"{sequences} sequences, {checked} invariant checks, {len(failures)} violations")


def test_c4_all_pairs_search_oracle(accept):
    mismatches = searches = 0
    for seed in range(50):
        rng = random.Random(10_000 + seed)
        L = vector_length(64)
        ov = Overlay(L)
        ids = set()
        while len(ids) < 64:
            ids.add(rng.getrandbits(64))
        for num_id in ids:
            ov.add_node(num_id, rng.getrandbits(L))
        for i in range(64):
            ov.insert_node(i)
        targets = [ov.num_id[i] for i in range(64)] + [rng.getrandbits(64) for _ in range(16)] + [0, 2**64 - 1]
        for s in range(64):
            for t in targets:
                res = ov.search_by_num_id(s, t)
                searches += 1
                mismatches += res.failed or res.terminal != num_search_oracle(ov, t)
            for v in [ov.mem_vec[i] for i in range(64)] + [rng.getrandbits(L) for _ in range(16)]:
                res = ov.search_by_name_id(s, v)
                searches += 1
                mismatches += res.failed or res.terminal != name_search_oracle(ov, v)
    assert accept("C4b all-pairs search oracle, 50 x 64-node overlays", mismatches == 0,
                  f"{searches} searches, {mismatches} mismatches")


# ---------------------------------------------------------------- 5: hop count


def test_c5_mean_hops_1024(accept):
    c = SimulationConfig("STORAGE", "BASIC", 1, 1024, 1, 0, "NONE", "COOPERATIVE", 0.0, log=False)
    ov = generate_topology(c, 0).build_overlay()
    for i in range(1024):
        ov.insert_node(i)
    rng = derive_rng(c.seed, 0, "query")
    starts = rng.integers(0, 1024, size=10_000)
    targets = draw_uint64(rng, 10_000)
    hops = [ov.search_by_num_id(int(s), t).hops for s, t in zip(starts, targets)]
    mean = float(np.mean(hops))
    lo, hi = 0.5 * math.log2(1024), 2.5 * math.log2(1024)
    assert accept("C5 mean hops, 1024 nodes, 10^4 searches", lo <= mean <= hi,
                  f"mean {mean:.3f} in [{lo:.0f}, {hi:.0f}]")


# ---------------------------------------------------------------- 6: churn type pairing


def test_c6_cooperative_vs_adversarial(accept):
    rows = []
    for seed in range(20):
        c = SimulationConfig("BLOCKCHAIN", "LIGHTCHAIN", 1, 256, 48, 1, "FAST_DEBIAN", "COOPERATIVE", 0.16,
                             log=False, seed=seed)
        coop = run(c).report("success_ratio").per_topology[0]
        adv = run(c.replace(churn_type="ADVERSARIAL")).report("success_ratio").per_topology[0]
        rows.append((seed, coop, adv))
    ok = all(coop == 1.0 and adv <= coop for _, coop, adv in rows)
    worst = min(adv for _, _, adv in rows)
    assert accept("C6 cooperative = 1.0 and adversarial <= cooperative, 20 seeds", ok,
                  f"cooperative {sorted({r[1] for r in rows})}, adversarial range "
                  f"[{worst:.4f}, {max(r[2] for r in rows):.4f}]")


# ---------------------------------------------------------------- 7: hypergeometric oracle


def test_c7_adversarial_matches_hypergeometric(week_run, accept):
    rows = report_rows(week_run["out"])
    mean = float(rows[("adversarial_success.mean", "AGG")][0])
    ok = abs(mean - HYPERGEOM_MAJORITY) <= 0.02
    assert accept("C7 k=3 adversarial success vs hypergeometric", ok,
                  f"measured {mean:.6f}, exact {HYPERGEOM_MAJORITY:.6f}, |diff| {abs(mean - HYPERGEOM_MAJORITY):.4f} (<= 0.02)")


# ---------------------------------------------------------------- 8: parallel determinism


def test_c8_threads_bit_identical(week_run, workdir, accept):
    # fresh store so the 8-worker run also regenerates every snapshot itself
    code, err, elapsed = skipsim(["run", "week.cfg", "--out", "out8", "--threads", "8", "--store", "store8"], workdir)
    assert code == 0, err
    same = {name: sha(week_run["out"] / name) == sha(workdir / "out8" / name) for name in ("report.csv", "report.json")}
    assert accept("C8 --threads 1 vs --threads 8 reports", all(same.values()),
                  f"bit-identical {same}, 8-worker run {elapsed:.0f} s")
