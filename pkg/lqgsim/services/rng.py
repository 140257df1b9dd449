"""Counter-based random streams keyed by (master seed, replica, role).

Every consumer asks for its own stream instead of sharing a generator, so the
draws a replica sees never depend on how replicas are scheduled on threads.
"""
from __future__ import annotations

import enum

import numpy as np

SEED_MASK = (1 << 64) - 1


class StreamRole(int, enum.Enum):
    FIELD = 0
    PATH = 1


def _sequence(master_seed: int, replica_index: int, role: StreamRole, substream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(master_seed) & SEED_MASK,
        spawn_key=(int(replica_index), int(role), int(substream)),
    )


def stream(
    master_seed: int,
    replica_index: int = 0,
    role: StreamRole = StreamRole.FIELD,
    substream: int = 0,
) -> np.random.Generator:
    """Return a Philox generator for one (seed, replica, role, substream) key."""
    return np.random.Generator(np.random.Philox(_sequence(master_seed, replica_index, role, substream)))


def replica_seed(master_seed: int, replica_index: int, role: StreamRole = StreamRole.FIELD) -> int:
    """Derive a 64-bit seed for APIs that take a plain integer seed."""
    seq = _sequence(master_seed, replica_index, role, substream=(1 << 31) - 1)
    return int(seq.generate_state(1, dtype=np.uint64)[0])
