"""Seeded randomness via named sub-streams.

Every random draw in the toolkit flows from a single u64 seed through a
named stream (e.g. "solver/3", "ct/init"); adding a new stream never
perturbs existing ones, and parallel trajectory generation is bit-identical
to serial because each trajectory owns its stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(seed: int, name: str) -> int:
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(seed, name)))
