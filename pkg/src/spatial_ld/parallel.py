"""Chunked replica loops with an optional process pool.

Chunk boundaries depend only on the replica count, never on ``workers``, and
results come back in chunk order. Together with per-replica random streams
this makes every reduction independent of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

CHUNK = 5000


def chunk_bounds(total: int, chunk: int = CHUNK):
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def map_replicas(fn, prefix: tuple, total: int, workers: int = 1, extra: tuple = (), chunk: int = CHUNK):
    """Apply ``fn(prefix + (lo, hi) + extra)`` to every chunk, in order."""
    jobs = [prefix + (lo, hi) + extra for lo, hi in chunk_bounds(total, chunk)]
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def map_tasks(fn, tasks, workers: int = 1):
    """Ordered map over independent tasks."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
