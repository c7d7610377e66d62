"""Per-sample random streams keyed by ``(seed, sample index)``.

A sample draws from its own streams only, so results do not depend on how
samples are split across workers or on how many samples are requested.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

KERNEL_STREAM = 0
NUMPY_STREAM = 1


def kernel_state(seed: int, index: int) -> np.ndarray:
    """Four uint64 words seeding the xoshiro256** generator used inside kernels."""
    ss = np.random.SeedSequence(seed, spawn_key=(int(index), KERNEL_STREAM))
    state = ss.generate_state(4, np.uint64)
    if not state.any():
        state[0] = 1
    return state


def numpy_rng(seed: int, index: int, stream: int = NUMPY_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(index), stream))))


def map_samples(fn: Callable[[int], object], indices: Sequence[int], workers: int = 1) -> list:
    """Apply ``fn`` to every sample index, in parallel threads, keeping index order."""
    indices = list(indices)
    if workers <= 1 or len(indices) < 2:
        return [fn(i) for i in indices]
    chunks = np.array_split(np.arange(len(indices)), workers)

    def run(chunk):
        return [fn(indices[k]) for k in chunk]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, chunks))
    return [r for part in parts for r in part]
