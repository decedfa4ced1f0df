"""Ordered parallel map and deterministic random substreams."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def substream(seed, *keys) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``.

    The stream depends only on the integers given, never on scheduling, so
    replication ``b`` draws the same numbers whatever the thread count.
    """
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def resolve_jobs(n_jobs) -> int:
    if n_jobs is None or n_jobs == 0:
        return 1
    if n_jobs < 0:
        return max(1, (os.cpu_count() or 1) + 1 + n_jobs)
    return int(n_jobs)


def ordered_map(func, items, n_jobs=1, chunksize=1):
    """``[func(item) for item in items]``, optionally in worker processes.

    Results always come back in input order.
    """
    items = list(items)
    n_jobs = resolve_jobs(n_jobs)
    if n_jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(items))) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
