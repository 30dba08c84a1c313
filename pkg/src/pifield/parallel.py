"""Worker pool with a fixed chunking so results never depend on the worker count.

``PIFIELD_THREADS`` caps the number of workers (default 1).
"""
import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    try:
        n = int(os.environ.get("PIFIELD_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, min(n, 64))


def map_chunks(fn, n_items, chunk):
    """Apply ``fn(start, stop)`` over fixed-size slices; results come back in slice order."""
    bounds = [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]
    workers = worker_count()
    if workers == 1 or len(bounds) <= 1:
        return [fn(s, e) for s, e in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
