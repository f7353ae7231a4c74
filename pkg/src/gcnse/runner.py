"""Independent training runs, optionally spread over worker processes.

Every task is a pure function of its arguments (graph, config, seed), so
results are identical whatever the worker count; they are always returned in
submission order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "GCNSE_WORKERS"


def derive_seeds(seed: int | None, count: int) -> list[int]:
    """``count`` independent 32-bit seeds derived from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def run_many(fn: Callable[[T], R], tasks: Sequence[T] | Iterable[T], workers: int | None = None) -> list[R]:
    tasks = list(tasks)
    workers = min(resolve_workers(workers), max(1, len(tasks)))
    if workers == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
