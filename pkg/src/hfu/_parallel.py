"""Fixed-partition block execution.

Work is split into blocks whose boundaries depend only on the problem size,
never on the worker count, and partial results are always combined in block
order. Results are therefore bit-identical for any number of workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

BLOCK_ROWS = 256


def worker_count(workers: int | None = None) -> int:
    """Resolve a worker count, capped by the HFU_THREADS environment variable."""
    cap = os.environ.get("HFU_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            pass
    if workers is None:
        return limit
    return max(1, min(int(workers), limit))


def blocks(start: int, stop: int, size: int = BLOCK_ROWS) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, stop)) for lo in range(start, stop, size)]


def map_blocks(fn: Callable[[int, int], T], ranges: Sequence[tuple[int, int]],
               workers: int | None = None) -> list[T]:
    """Apply ``fn(lo, hi)`` to each range; output order follows ``ranges``."""
    w = worker_count(workers)
    if w == 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


def exact_sum(parts) -> float:
    """Correctly rounded sum of block partials (order independent)."""
    return math.fsum(float(p) for p in parts)
