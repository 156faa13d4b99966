"""Counter-based random streams.

Every replication draws from ``stream(seed, index)``, a Philox generator keyed
by the pair, so replication ``r`` never depends on how many draws earlier
replications consumed.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "philox4x64-seedsequence-v1"


def stream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, index...)``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))
