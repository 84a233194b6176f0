"""Deterministic reductions and chunked parallel evaluation.

Chunk boundaries depend only on the problem size, never on the worker
count, and every reduction runs through :func:`pairwise_sum`, so results are
bit-identical for any number of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_THREADS = max(1, int(os.environ.get("HEATDET_THREADS", "1")))


def set_threads(n: int) -> None:
    global _THREADS
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _THREADS = int(n)


def get_threads() -> int:
    return _THREADS


def pairwise_sum(values, axis: int = 0):
    """Sum along ``axis`` with a fixed balanced binary tree.

    The tree only depends on the length of the reduced axis, which makes the
    rounding pattern reproducible.
    """
    a = np.moveaxis(np.asarray(values), axis, 0)
    if a.shape[0] == 0:
        return np.zeros(a.shape[1:], dtype=a.dtype)[()]
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            a = np.concatenate([a, np.zeros((1,) + a.shape[1:], dtype=a.dtype)])
        a = a[0::2] + a[1::2]
    return a[0]


def chunk_bounds(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def map_chunks(fn, n: int, chunk: int, threads: int | None = None) -> list:
    """Apply ``fn(lo, hi)`` to fixed chunks of ``range(n)``; results in order."""
    bounds = chunk_bounds(n, chunk)
    threads = threads or _THREADS
    if threads <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
