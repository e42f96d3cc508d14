"""Reproducible per-topology random streams."""

from __future__ import annotations

import hashlib

import numpy as np

STREAM_LABELS = ("placement", "memvec", "numid", "churn", "query", "malicious-assignment", "probe", "resources")

ID_SPACE = 1 << 64


def _label_word(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def derive_rng(master_seed: int, topology_index: int, label: str) -> np.random.Generator:
    """Independent PCG64 stream keyed by (master seed, topology index, label)."""
    if label not in STREAM_LABELS:
        raise ValueError(f"unknown stream label {label!r}")
    ss = np.random.SeedSequence([master_seed & (ID_SPACE - 1), topology_index, _label_word(label)])
    return np.random.Generator(np.random.PCG64(ss))


def draw_uint64(rng: np.random.Generator, size: int) -> list[int]:
    return [int(v) for v in rng.integers(0, ID_SPACE, size=size, dtype=np.uint64)]


def draw_unique_ids(rng: np.random.Generator, count: int, taken: set[int]) -> tuple[list[int], int]:
    """Draw ``count`` ids from [0, 2^64) absent from ``taken``; updates ``taken``.

    Returns the ids and the number of collisions that forced a redraw.
    """
    out = []
    redraws = 0
    for v in draw_uint64(rng, count):
        while v in taken:
            redraws += 1
            v = draw_uint64(rng, 1)[0]
        taken.add(v)
        out.append(v)
    return out, redraws


def draw_vectors(rng: np.random.Generator, count: int, vec_len: int) -> list[int]:
    if vec_len == 0:
        return [0] * count
    return [int(v) for v in rng.integers(0, 1 << vec_len, size=count, dtype=np.uint64)]
