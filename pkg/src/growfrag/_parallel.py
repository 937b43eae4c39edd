"""Deterministic blocked reductions.

Work is split into fixed-size row blocks regardless of the worker count and
partial results are summed in block order, so the result is bitwise the same
for one thread or many.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

BLOCK_ROWS = 64

_single_thread = False


def set_single_thread(flag: bool = True) -> None:
    """Force every blocked reduction to run in the calling thread."""
    global _single_thread
    _single_thread = bool(flag)


def worker_count() -> int:
    if _single_thread:
        return 1
    env = os.environ.get("GROWFRAG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def blocked_sum(block_fn: Callable[[int, int], float], n_rows: int, threads: int | None = None,
                block: int = BLOCK_ROWS) -> float:
    """``sum(block_fn(lo, hi))`` over consecutive row blocks, reduced in order."""
    bounds = [(lo, min(lo + block, n_rows)) for lo in range(0, n_rows, block)]
    threads = worker_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(bounds) == 1:
        parts = [block_fn(lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: block_fn(*b), bounds))
    total = 0.0
    for p in parts:
        total += p
    return total
