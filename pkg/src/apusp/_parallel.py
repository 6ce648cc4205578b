from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Worker cap from ``APUSP_THREADS`` (0 or unset = auto)."""
    raw = os.environ.get("APUSP_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = min(8, os.cpu_count() or 1)
    return n


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``list(map(fn, items))``, optionally threaded; output order is input order."""
    items = list(items)
    n = thread_count() if workers is None else workers
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
