"""Chunked, seeded Monte-Carlo execution of mechanisms.

Runs are split into fixed-size chunks; chunk ``c`` of a task always draws
from ``stream(seed, *labels, c)``. Chunking never depends on the worker
count, so results are identical for any degree of parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .core import Mechanism, MechanismArgs, OutputBatch, stream

CHUNK = 50_000


def chunk_sizes(n: int, chunk: int = CHUNK) -> list:
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_batches(mechanism: Mechanism, q, args: MechanismArgs, n: int, seed: int,
                labels: Sequence[int], workers: int = 1) -> OutputBatch:
    """Execute ``mechanism`` ``n`` times on ``q`` and return every output."""
    q = np.asarray(q, dtype=float)
    sizes = chunk_sizes(n)

    def one(c):
        return mechanism.sample(q, args, stream(seed, *labels, c), sizes[c])

    return OutputBatch.concat(_map(one, range(len(sizes)), workers))


def count_event(mechanism: Mechanism, q, args: MechanismArgs, event, n: int, seed: int,
                labels: Sequence[int], workers: int = 1) -> int:
    """Number of ``n`` executions whose output lies in ``event``."""
    q = np.asarray(q, dtype=float)
    sizes = chunk_sizes(n)

    def one(c):
        batch = mechanism.sample(q, args, stream(seed, *labels, c), sizes[c])
        return int(np.count_nonzero(event.mask(batch)))

    return sum(_map(one, range(len(sizes)), workers))
