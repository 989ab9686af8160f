"""Small shared helpers: thread-pool mapping and per-point RNG derivation."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "COCYCLEKIT_THREADS"


def thread_count():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Ordered map, threaded when COCYCLEKIT_THREADS > 1.

    Results are collected in input order, so outputs are identical for any
    thread count.
    """
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def point_rng(seed, tag, index):
    """Deterministic per-point generator, independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFF, tag, index]))
