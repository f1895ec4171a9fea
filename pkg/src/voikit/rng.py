"""Counter-based random streams and a deterministic row-parallel map.

Every random draw in the package comes from a stream keyed by
``(seed, purpose, *counters)``.  A stream depends only on its key, never
on which thread asked for it or in what order, so serial and threaded
runs produce identical bits.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

_default_threads = 1


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *counters: int) -> np.random.Generator:
    """Return the generator for one ``(seed, purpose, counters)`` key."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (purpose_code(purpose),) + tuple(int(c) for c in counters)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, purpose: str, *counters: int) -> int:
    """A child integer seed, for handing a keyed sub-problem its own seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose_code(purpose),) + tuple(counters))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def set_default_threads(n: int | None) -> None:
    global _default_threads
    _default_threads = max(1, int(n)) if n else (os.cpu_count() or 1)


def get_default_threads() -> int:
    return _default_threads


def map_rows(fn: Callable[[int], T], n: int, threads: int | None = None) -> list[T]:
    """``[fn(0), ..., fn(n - 1)]``, optionally spread over threads.

    Results are always returned in index order; ``fn`` must draw its
    randomness from :func:`stream` keyed by its own index.
    """
    threads = threads or _default_threads
    if threads <= 1 or n < 2:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n), chunksize=max(1, n // (threads * 8))))


def sequential_sum(x: np.ndarray | Sequence[float], axis: int = 0) -> np.ndarray:
    """Left-to-right summation (``cumsum``), so results do not depend on
    numpy's pairwise blocking and can be reproduced with a plain loop."""
    x = np.asarray(x, dtype=float)
    if x.shape[axis] == 0:
        return np.take(np.zeros_like(x), 0, axis=axis) if x.ndim > 1 else np.float64(0.0)
    return np.take(np.cumsum(x, axis=axis), -1, axis=axis)


def sequential_mean(x: np.ndarray | Sequence[float], axis: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return sequential_sum(x, axis=axis) / x.shape[axis]
