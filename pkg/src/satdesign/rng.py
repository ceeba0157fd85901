"""Counter-based random streams keyed by (seed, labels...).

Every stream is derived from its key alone, so the draws for replication
``r`` never depend on how many other replications ran before it or on
which worker executes it.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label(x) -> int:
    if isinstance(x, (int, np.integer)):
        if x < 0:
            raise ValueError("stream labels must be non-negative")
        return int(x)
    digest = hashlib.sha256(str(x).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, *labels) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label(x) for x in labels))
    return np.random.Generator(np.random.Philox(ss))
