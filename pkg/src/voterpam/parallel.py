"""Deterministic sharding of replica ranges across worker threads.

Every replica draws from its own child seed, so the split into shards and the
number of workers never change the numbers; results are concatenated in
replica order. The compiled core releases the GIL, so threads scale.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 4096


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def ranges(total: int, chunk: int = DEFAULT_CHUNK):
    return [(a, min(a + chunk, total)) for a in range(0, total, chunk)]


def run_sharded(fn, total: int, workers: int | None = None, chunk: int = DEFAULT_CHUNK):
    """Call ``fn(start, stop)`` over replica shards; return results in shard order."""
    if total <= 0:
        return []
    workers = workers or default_workers()
    shards = ranges(total, chunk)
    if workers == 1 or len(shards) == 1:
        return [fn(a, b) for a, b in shards]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda ab: fn(*ab), shards))


def concat(parts):
    """Concatenate shard outputs; tuples are concatenated element-wise."""
    if not parts:
        return parts
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)
