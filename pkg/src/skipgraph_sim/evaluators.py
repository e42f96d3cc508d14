"""Metric collectors and cross-topology aggregation.

Each evaluator instance watches one topology. Per-topology values are merged
in topology-index order into an :class:`EvaluatorReport`; a value of ``None``
marks an undefined metric (written as ``NA``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .overlay import SearchResult

NA = "NA"


class LatencyEvaluator:
    """Mean hop count and mean end-to-end path latency over successful queries."""

    def __init__(self, link_latency: Callable[[int, int], float]):
        self.link_latency = link_latency
        self.count = 0
        self.hops = 0
        self.latency_ms = 0.0

    def feed(self, result: SearchResult) -> None:
        if result.failed:
            return
        path = result.path
        self.count += 1
        self.hops += len(path) - 1
        lat = self.link_latency
        self.latency_ms += sum(lat(a, b) for a, b in zip(path, path[1:]))

    def values(self) -> dict[str, tuple[float | None, int]]:
        if not self.count:
            return {"query_hops": (None, 0), "query_latency_ms": (None, 0)}
        return {
            "query_hops": (self.hops / self.count, self.count),
            "query_latency_ms": (self.latency_ms / self.count, self.count),
        }


class SuccessRatioEvaluator:
    def __init__(self):
        self.total = 0
        self.successes = 0

    def feed(self, result: SearchResult) -> None:
        self.total += 1
        self.successes += not result.failed

    def values(self) -> dict[str, tuple[float | None, int]]:
        ratio = self.successes / self.total if self.total else None
        return {"success_ratio": (ratio, self.total)}


class AvailabilityEvaluator:
    """Probe-based availability, plus the owner-online fraction as a diagnostic."""

    def __init__(self):
        self.probes = 0
        self.available = 0
        self.owner_online = 0

    def feed(self, reached_object: bool, owner_online: bool) -> None:
        self.probes += 1
        self.available += reached_object and owner_online
        self.owner_online += owner_online

    def values(self) -> dict[str, tuple[float | None, int]]:
        if not self.probes:
            return {"availability": (None, 0), "availability_omniscient": (None, 0)}
        return {
            "availability": (self.available / self.probes, self.probes),
            "availability_omniscient": (self.owner_online / self.probes, self.probes),
        }


class AdversarialSuccessEvaluator:
    """Fraction of data objects whose validating committee had a malicious majority."""

    def __init__(self):
        self.total = 0
        self.malicious_majority = 0

    def feed(self, malicious_majority: bool) -> None:
        self.total += 1
        self.malicious_majority += malicious_majority

    def values(self) -> dict[str, tuple[float | None, int]]:
        value = self.malicious_majority / self.total if self.total else None
        return {"adversarial_success": (value, self.total)}


def eval_latency(results: Iterable[SearchResult], link_latency) -> dict:
    ev = LatencyEvaluator(link_latency)
    for r in results:
        ev.feed(r)
    return ev.values()


def eval_success_ratio(results: Iterable[SearchResult]) -> dict:
    ev = SuccessRatioEvaluator()
    for r in results:
        ev.feed(r)
    return ev.values()


def eval_availability(probes: Iterable[tuple[bool, bool]]) -> dict:
    ev = AvailabilityEvaluator()
    for reached, owner_up in probes:
        ev.feed(reached, owner_up)
    return ev.values()


def eval_adversarial_success(committees) -> dict:
    ev = AdversarialSuccessEvaluator()
    for c in committees:
        ev.feed(c.malicious_majority)
    return ev.values()


# ----------------------------------------------------------------------
# aggregation and report files

AGG_STATS = ("mean", "std", "min", "max")


def aggregate(values: list[float | None]) -> dict[str, float | None]:
    defined = [v for v in values if v is not None]
    if not defined:
        return dict.fromkeys(AGG_STATS)
    return {
        "mean": math.fsum(defined) / len(defined),
        "std": statistics.stdev(defined) if len(defined) > 1 else None,
        "min": min(defined),
        "max": max(defined),
    }


@dataclass
class EvaluatorReport:
    metric: str
    per_topology: list[float | None]
    samples: list[int]
    aggregate: dict[str, float | None] = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregate:
            self.aggregate = aggregate(self.per_topology)

    @property
    def sample_count(self) -> int:
        return sum(self.samples)

    @property
    def defined_topologies(self) -> int:
        return sum(v is not None for v in self.per_topology)

    def consistent(self) -> bool:
        return _fmt(self.aggregate["mean"]) == _fmt(aggregate(self.per_topology)["mean"])


def _fmt(value: float | None) -> str:
    return NA if value is None else f"{value:.6f}"


def merge_reports(per_topology: list[dict[str, tuple[float | None, int]]]) -> list[EvaluatorReport]:
    """Combine per-topology metric dicts (already in topology-index order)."""
    metrics: list[str] = []
    for values in per_topology:
        for name in values:
            if name not in metrics:
                metrics.append(name)
    reports = []
    for name in metrics:
        vals = [values.get(name, (None, 0)) for values in per_topology]
        reports.append(EvaluatorReport(name, [v for v, _ in vals], [n for _, n in vals]))
    return reports


def report_csv(reports: list[EvaluatorReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "topology_index", "value", "samples"])
    for rep in reports:
        for idx, (v, n) in enumerate(zip(rep.per_topology, rep.samples)):
            w.writerow([rep.metric, idx, _fmt(v), n])
        for stat in AGG_STATS:
            w.writerow([f"{rep.metric}.{stat}", "AGG", _fmt(rep.aggregate[stat]), rep.defined_topologies])
    return buf.getvalue()


def report_json(reports: list[EvaluatorReport], extra: dict | None = None) -> str:
    doc = {
        "metrics": [
            {
                "metric": rep.metric,
                "per_topology": [
                    {"topology_index": i, "value": _fmt(v), "samples": n}
                    for i, (v, n) in enumerate(zip(rep.per_topology, rep.samples))
                ],
                "aggregate": {stat: _fmt(rep.aggregate[stat]) for stat in AGG_STATS},
                "samples": rep.sample_count,
            }
            for rep in reports
        ]
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def read_report_csv(text: str) -> dict[tuple[str, str], tuple[str, int]]:
    rows = list(csv.reader(io.StringIO(text)))
    return {(m, t): (v, int(n)) for m, t, v, n in rows[1:]}
