"""Even work division and a tiny thread runner for the phased pipeline."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")


def load_split(total: int, workers: int) -> list[range]:
    """Partition ``range(total)`` across ``workers``.

    With ``U = total // workers`` and ``W = total % workers``, the first ``W``
    workers get ``U + 1`` items and the rest get ``U``. Every worker receives a
    (possibly empty) contiguous range, in order.
    """
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers}")
    if total < 0:
        raise ValueError(f"total must be non-negative, got {total}")
    base, extra = divmod(total, workers)
    ranges = []
    start = 0
    for w in range(workers):
        stop = start + base + (1 if w < extra else 0)
        ranges.append(range(start, stop))
        start = stop
    return ranges


def run_split(fn: Callable[[range], T], total: int, workers: int) -> list[T]:
    """Apply ``fn`` to each worker's range; results come back in worker order."""
    ranges = load_split(total, workers)
    if workers == 1:
        return [fn(ranges[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ranges))
