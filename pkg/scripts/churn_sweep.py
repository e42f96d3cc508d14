"""Sweep churn model and churn type on a small blockchain overlay.

    python3 scripts/churn_sweep.py
    python3 scripts/churn_sweep.py --capacity 512 --lifetime 48 --topologies 3

Prints one row per (ChurnModel, ChurnType) pair with the aggregate mean of
each metric. Snapshots go to a throwaway store unless --store is given.
"""

from __future__ import annotations

import argparse
import sys
import tempfile

from skipgraph_sim.churn import PRESETS
from skipgraph_sim.config import CHURN_TYPES, SimulationConfig
from skipgraph_sim.engine import run

METRICS = ("query_hops", "query_latency_ms", "success_ratio", "availability", "adversarial_success")


def sweep(capacity: int, lifetime: int, topologies: int, malicious: float, store: str, threads: int):
    for model in PRESETS:
        for churn_type in CHURN_TYPES:
            config = SimulationConfig("BLOCKCHAIN", "LIGHTCHAIN", topologies, capacity, lifetime, 1,
                                      model, churn_type, malicious)
            result = run(config, store, threads)
            yield model, churn_type, [result.report(m).aggregate["mean"] for m in METRICS]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--capacity", type=int, default=256)
    ap.add_argument("--lifetime", type=int, default=24)
    ap.add_argument("--topologies", type=int, default=2)
    ap.add_argument("--malicious", type=float, default=0.16)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--store", default=None)
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as scratch:
        store = args.store or scratch
        print("\t".join(("churn_model", "churn_type", *METRICS)))
        for model, churn_type, means in sweep(args.capacity, args.lifetime, args.topologies,
                                              args.malicious, store, args.threads):
            cells = ["-" if v is None else f"{v:.4f}" for v in means]
            print("\t".join((model, churn_type, *cells)), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
