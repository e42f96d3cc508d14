"""Time and memory of one simulation, measured in a fresh process.

    python3 scripts/scale_probe.py configs/storage_4096.cfg
    python3 scripts/scale_probe.py configs/storage_4096.cfg --capacity 1024 2048 4096

With several capacities, each runs in its own child process and a log-log
fit of extra memory against node count is printed. Output is one JSON line
per run on stdout.
"""

from __future__ import annotations

import argparse
import json
import math
import resource
import subprocess
import sys
import time
from pathlib import Path

import numpy as np


def peak_rss_mb() -> float:
    # ru_maxrss survives fork+exec, so a large parent would leak into it;
    # VmHWM belongs to this address space alone
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) / 1024.0
    except OSError:
        pass
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0  # KiB on Linux


def measure(config_path: str, capacity: int | None, threads: int) -> dict:
    from skipgraph_sim.config import parse_config
    from skipgraph_sim.engine import run

    config = parse_config(Path(config_path).read_text(encoding="utf-8"))
    if capacity is not None:
        config = config.replace(system_capacity=capacity)
    config = config.replace(log=False)
    base = peak_rss_mb()
    t0 = time.perf_counter()
    result = run(config, None, threads)
    elapsed = time.perf_counter() - t0
    return {
        "capacity": config.system_capacity,
        "lifetime": config.lifetime,
        "simulation_type": config.simulation_type,
        "elapsed_s": round(elapsed, 3),
        "peak_rss_mb": round(peak_rss_mb(), 1),
        "baseline_rss_mb": round(base, 1),
        "txb_total": result.report("txb_total").aggregate["mean"],
    }


def probe(config_path: str, capacity: int | None = None, threads: int = 1) -> dict:
    """Run :func:`measure` in a child process so peak RSS belongs to this run alone."""
    cmd = [sys.executable, __file__, config_path, "--child", "--threads", str(threads)]
    if capacity is not None:
        cmd += ["--capacity", str(capacity)]
    out = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def memory_exponent(rows: list[dict]) -> float:
    n = np.log([r["capacity"] for r in rows])
    mem = np.log([max(r["peak_rss_mb"] - r["baseline_rss_mb"], 1e-3) for r in rows])
    return float(np.polyfit(n, mem, 1)[0])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--capacity", type=int, nargs="*", default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        cap = args.capacity[0] if args.capacity else None
        print(json.dumps(measure(args.config, cap, args.threads)))
        return 0
    caps = args.capacity or [None]
    rows = []
    for cap in caps:
        row = probe(args.config, cap, args.threads)
        rows.append(row)
        print(json.dumps(row), flush=True)
    if len(rows) > 1 and len({r["capacity"] for r in rows}) > 1:
        print(json.dumps({"memory_exponent": round(memory_exponent(rows), 3)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
