"""Randomized topologies: identifiers, placements, link latencies, resources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .churn import ChurnTrace, generate_churn_trace, get_preset
from .overlay import Overlay, int_to_bits, vector_length
from .rng import derive_rng, draw_unique_ids, draw_vectors

LATENCY_SCALE_MS = 100.0

# Zipf-like heavy tails standing in for measured resource traces
RESOURCE_TABLE = {
    "bandwidth": {"low": 1, "high": 100, "exponent": 1.0},
    "storage_capacity": {"low": 8, "high": 1024, "exponent": 1.0},
}

TOPOLOGY_HEADER = "index\tnum_id\tmem_vec\tx\ty\tbandwidth\tstorage"


@dataclass(frozen=True)
class Placement:
    x: float
    y: float


@dataclass(frozen=True)
class NodeResources:
    bandwidth: int
    storage_capacity: int


def latency(a: Placement, b: Placement) -> float:
    """Link latency in milliseconds: Euclidean distance in the unit square times 100."""
    return math.hypot(a.x - b.x, a.y - b.y) * LATENCY_SCALE_MS


class ZipfSampler:
    """Discrete P(k) proportional to k^-s on the integers ``low..high``."""

    def __init__(self, low: int, high: int, exponent: float):
        self.support = np.arange(low, high + 1)
        weights = self.support.astype(float) ** -exponent
        self.pmf = weights / weights.sum()
        self.cdf = np.cumsum(self.pmf)
        self.cdf[-1] = 1.0

    def mean(self) -> float:
        return float((self.support * self.pmf).sum())

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        idx = np.searchsorted(self.cdf, u, side="right")
        if size is None:
            return int(self.support[idx])
        return self.support[idx]


SAMPLERS = {name: ZipfSampler(**params) for name, params in RESOURCE_TABLE.items()}


def sample_resources(rng: np.random.Generator, size: int | None = None):
    """Draw heterogeneous node resources; a list when ``size`` is given."""
    if size is None:
        return NodeResources(
            SAMPLERS["bandwidth"].sample(rng), SAMPLERS["storage_capacity"].sample(rng)
        )
    bw = SAMPLERS["bandwidth"].sample(rng, size)
    st = SAMPLERS["storage_capacity"].sample(rng, size)
    return [NodeResources(int(b), int(s)) for b, s in zip(bw, st)]


@dataclass
class Topology:
    topology_index: int
    seed: int
    vec_len: int
    num_ids: list[int]
    mem_vecs: list[int]
    placements: list[Placement]
    resources: list[NodeResources]
    churn: ChurnTrace

    @property
    def size(self) -> int:
        return len(self.num_ids)

    def build_overlay(self) -> Overlay:
        """Fresh overlay holding every peer, all offline."""
        ov = Overlay(self.vec_len)
        for num_id, vec in zip(self.num_ids, self.mem_vecs):
            ov.add_node(num_id, vec)
        return ov

    def table_text(self) -> str:
        lines = [TOPOLOGY_HEADER]
        for i in range(self.size):
            p, r = self.placements[i], self.resources[i]
            lines.append(
                f"{i}\t{self.num_ids[i]}\t{int_to_bits(self.mem_vecs[i], self.vec_len)}\t"
                f"{p.x:.9f}\t{p.y:.9f}\t{r.bandwidth}\t{r.storage_capacity}"
            )
        return "\n".join(lines) + "\n"

    def save(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "topology.tsv").write_bytes(self.table_text().encode("utf-8"))
        self.churn.save(directory / "churn.tsv")

    @classmethod
    def load(cls, directory: Path, topology_index: int, seed: int, lifetime: int) -> "Topology":
        num_ids, vecs, places, res = [], [], [], []
        vec_len = None
        with open(directory / "topology.tsv", encoding="utf-8", newline="\n") as fh:
            header = fh.readline().rstrip("\n")
            if header != TOPOLOGY_HEADER:
                raise ValueError(f"{directory}/topology.tsv: bad header")
            for i, line in enumerate(fh):
                idx, num_id, bits, x, y, bw, st = line.rstrip("\n").split("\t")
                if int(idx) != i:
                    raise ValueError(f"{directory}/topology.tsv: row {i} has index {idx}")
                if vec_len is None:
                    vec_len = len(bits)
                num_ids.append(int(num_id))
                vecs.append(int(bits, 2) if bits else 0)
                places.append(Placement(float(x), float(y)))
                res.append(NodeResources(int(bw), int(st)))
        churn = ChurnTrace.load(directory / "churn.tsv", len(num_ids), lifetime)
        return cls(topology_index, seed, vec_len or 0, num_ids, vecs, places, res, churn)


def _quantize(values) -> list[float]:
    # floor to 9 decimals: stays in [0, 1) and the persisted text restores the same floats
    return [math.floor(v * 1e9) / 1e9 for v in values]


def generate_topology(config, topology_index: int) -> Topology:
    """Deterministic topology for (config.seed, topology_index); peers start offline."""
    n = config.system_capacity
    if n < 1:
        raise ValueError("SystemCapacity must be >= 1")
    if not 0 <= topology_index < config.topologies:
        raise ValueError(f"topology index {topology_index} outside [0, {config.topologies})")
    seed = config.seed
    vec_len = vector_length(n)
    num_ids, _ = draw_unique_ids(derive_rng(seed, topology_index, "numid"), n, set())
    vecs = draw_vectors(derive_rng(seed, topology_index, "memvec"), n, vec_len)
    xy = derive_rng(seed, topology_index, "placement").random((n, 2))
    xs, ys = _quantize(xy[:, 0]), _quantize(xy[:, 1])
    places = [Placement(x, y) for x, y in zip(xs, ys)]
    resources = sample_resources(derive_rng(seed, topology_index, "resources"), n)
    churn = generate_churn_trace(
        get_preset(config.churn_model), config.lifetime, n, derive_rng(seed, topology_index, "churn")
    )
    return Topology(topology_index, seed, vec_len, num_ids, vecs, places, resources, churn)
