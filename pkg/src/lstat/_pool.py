"""Order-preserving parallel map; results never depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, TypeVar

T = TypeVar("T")


def resolve_workers(workers: int | None) -> int:
    return max(1, os.cpu_count() or 1) if workers is None else max(1, int(workers))


def ordered_map(fn: Callable[[int], T], count: int, workers: int | None = 1) -> Iterator[T]:
    """Yield ``fn(0), ..., fn(count - 1)`` in index order."""
    w = resolve_workers(workers)
    if w == 1 or count <= 1:
        for i in range(count):
            yield fn(i)
        return
    with ThreadPoolExecutor(max_workers=w) as pool:
        yield from pool.map(fn, range(count))
