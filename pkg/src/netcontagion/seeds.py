"""Counter-based seed derivation.

Every stochastic sub-task derives its generator from a master seed plus a
path of labels/counters, so results are reproducible and independent of
execution order or parallelism degree.
"""

import hashlib

import numpy as np


def _entropy_word(part) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "big")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("seed path components must be non-negative")
        return int(part)
    raise TypeError(f"seed path component must be int or str, got {type(part)!r}")


def spawn_rng(master_seed: int, *path) -> np.random.Generator:
    """Return a Generator keyed by ``(master_seed, *path)``.

    The same (seed, path) always yields the same stream; distinct paths
    yield statistically independent streams.
    """
    words = [_entropy_word(master_seed)] + [_entropy_word(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(words))
