"""Chunked thread-pool map used by the per-frequency solvers.

Work is split into fixed-size chunks that do not depend on the thread count,
and every chunk writes only its own slice, so results are bit-identical for
any number of workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor

DEFAULT_CHUNK = 2048

_default_threads = 1


def set_default_threads(n):
    global _default_threads
    _default_threads = max(1, int(n))


def default_threads():
    env = os.environ.get("BIFS_THREADS")
    return max(1, int(env)) if env else _default_threads


def chunk_slices(n, chunk=DEFAULT_CHUNK):
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def run_chunks(func, n, threads=None, chunk=DEFAULT_CHUNK):
    """Call ``func(slice)`` over ``range(n)`` in chunks; results returned in order."""
    slices = chunk_slices(n, chunk)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(slices) <= 1:
        return [func(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, slices))
