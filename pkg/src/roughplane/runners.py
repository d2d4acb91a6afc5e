"""Parallel Monte Carlo plumbing.

Work items carry their own seeds (derived from the master seed by
SeedSequence spawning), so results do not depend on the execution schedule;
``workers <= 1`` runs serially in-process.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers():
    env = os.environ.get("ROUGHPLANE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def parallel_map(fn, items, workers=1):
    """Map a picklable callable over items, preserving order."""
    items = list(items)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
