from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class DataError(ValueError):
    """Input data is unusable: missing/mismatched frames, empty feature sets, short signals."""


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    # Results come back in input order whatever the scheduling, so callers stay deterministic.
    if threads is None or threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fmt(value: float) -> str:
    """Fixed 6-significant-digit formatting used by every text export."""
    return format(float(value), ".6g")
