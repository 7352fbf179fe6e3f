"""
Seeded random streams.

Every randomized routine takes an integer seed. Monte Carlo work is split
into fixed-size blocks of trials and block b draws from the stream
SeedSequence([seed, b]), so results do not depend on how blocks are
scheduled across worker threads.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, List, Optional, Tuple, TypeVar

import numpy as np

from src.config import settings

T = TypeVar("T")


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """PCG64 generator for the stream identified by (seed, *path)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, path)])))


def time_seed() -> int:
    """Seed for interactive runs; printed by the CLI so the run can be replayed."""
    return time.time_ns() % (2**32)


def trial_blocks(trials: int, block_size: Optional[int] = None) -> Iterator[Tuple[int, int, int]]:
    """Yield (block index, first trial, trial count) covering `trials` trials."""
    size = block_size or settings.trial_block_size
    for b, start in enumerate(range(0, trials, size)):
        yield b, start, min(size, trials - start)


def run_blocks(
    trials: int,
    seed: int,
    work: Callable[[np.random.Generator, int], T],
    threads: Optional[int] = None,
) -> List[T]:
    """
    Run `work(rng, count)` once per trial block and return results in block order.

    Args:
        trials: Total number of trials
        seed: Master seed
        work: Callable receiving the block's generator and its trial count
        threads: Worker count (settings.threads or logical cores by default)

    Returns:
        List of per-block results, ordered by block index
    """
    blocks = list(trial_blocks(trials))
    workers = threads or settings.resolve_threads()
    if workers <= 1 or len(blocks) <= 1:
        return [work(make_rng(seed, b), count) for b, _, count in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(work, make_rng(seed, b), count) for b, _, count in blocks]
        return [f.result() for f in futures]
