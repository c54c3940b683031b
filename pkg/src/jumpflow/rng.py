"""Named random substreams derived from a single seed.

Every command derives its randomness from one seed through fixed named
substreams so individual components (data order, time sampling, coupling
noise, thinning, parameter init, per-run sampling) can be perturbed
independently in tests without disturbing the others.
"""

from __future__ import annotations

import numpy as np

STREAMS = ("data", "times", "noise", "thinning", "init", "sample")


def substream(seed: int, name: str, extra: int = 0) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown rng stream {name!r}; expected one of {STREAMS}")
    idx = STREAMS.index(name)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(idx, extra)))


def stream_map(seed: int) -> dict[str, np.random.Generator]:
    return {name: substream(seed, name) for name in STREAMS}
