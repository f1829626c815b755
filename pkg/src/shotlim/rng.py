"""Counter-style random streams.

``stream(seed, stream_id)`` returns a numpy ``Generator`` on the PCG64 bit
generator seeded by ``SeedSequence(seed, spawn_key=(stream_id,))``.  This is
the same state ``SeedSequence(seed).spawn`` would give to child number
``stream_id``, so streams are independent and can be created in any order.
The choice is fixed: golden values in the tests depend on it.
"""

from __future__ import annotations

import numpy as np

RngStream = np.random.Generator


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(master: int, *path: int) -> int:
    """Deterministic 63-bit child seed for a position in an experiment tree."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(2, np.uint32).astype(np.uint64) @ np.array([1 << 32, 1], dtype=np.uint64)) >> 1
