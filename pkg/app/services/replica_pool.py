"""
Replica pool for seeded Monte Carlo fan-out.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence

import numpy as np
import structlog

from app.config import settings
from app.errors import ConfigurationError


def replica_rng(seed: int, index: int, key: Sequence[int] = ()) -> np.random.Generator:
    """Stream of replica `index`; `key` separates parameter points of one run."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key), int(index)]))


def _run_block(fn: Callable, start: int, stop: int, seed: int, key: tuple, args: tuple) -> List[Any]:
    return [fn(replica_rng(seed, i, key), *args) for i in range(start, stop)]


class ReplicaPool:
    """
    Runs `fn(rng, *args)` for replicas 0..n-1 and returns results in replica order.

    Replica i always draws from replica_rng(seed, i, key), so results do not
    depend on the number of workers. `fn` must be a module-level function when
    workers > 1.
    """

    def __init__(self, workers: Optional[int] = None, chunk_size: Optional[int] = None):
        self.workers = int(workers or settings.workers)
        self.chunk_size = int(chunk_size or settings.chunk_size)
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigurationError("workers and chunk_size must be positive")
        self.logger = structlog.get_logger(__name__)

    def map(self, fn: Callable, n: int, seed: int, *args, key: Sequence[int] = ()) -> List[Any]:
        if n < 0:
            raise ConfigurationError(f"replica count must be nonnegative, got {n}")
        key = tuple(int(k) for k in key)
        blocks = [(lo, min(n, lo + self.chunk_size)) for lo in range(0, n, self.chunk_size)]
        self.logger.debug("replica fan-out", fn=getattr(fn, "__name__", str(fn)), replicas=n,
                          blocks=len(blocks), workers=self.workers)
        if self.workers == 1 or len(blocks) <= 1:
            results = []
            for lo, hi in blocks:
                results.extend(_run_block(fn, lo, hi, seed, key, args))
            return results

        with ProcessPoolExecutor(max_workers=self.workers) as executor:
            futures = [executor.submit(_run_block, fn, lo, hi, seed, key, args) for lo, hi in blocks]
            results = []
            for future in futures:
                results.extend(future.result())
        return results

    def map_array(self, fn: Callable, n: int, seed: int, *args, key: Sequence[int] = ()) -> np.ndarray:
        return np.asarray(self.map(fn, n, seed, *args, key=key))
