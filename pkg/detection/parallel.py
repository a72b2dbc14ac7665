"""Seeded replication helpers shared by calibration, benchmarks and the case study."""

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")


def spawn_seeds(master_seed: int, count: int) -> List[np.random.SeedSequence]:
    """Independent child seeds; child i depends only on (master_seed, i)."""
    return np.random.SeedSequence(master_seed).spawn(count)


def child_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """The index-th child of spawn_seeds(master_seed, ...), built directly."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def replicate_map(
    fn: Callable[[np.random.SeedSequence], T],
    seeds: Sequence[np.random.SeedSequence],
    threads: int = 1,
    desc: Optional[str] = None,
    progress: bool = True,
) -> List[T]:
    """
    Apply fn to every seed, in order.

    Args:
        fn: Picklable callable taking one SeedSequence
        seeds: Per-replicate seeds
        threads: Worker processes; 1 runs serially in this process
        desc: Progress bar label
        progress: Show a tqdm bar on an interactive stderr

    Returns:
        Results in seed order, identical for any thread count
    """
    show = progress and sys.stderr.isatty()
    if threads <= 1 or len(seeds) < 2:
        iterator: Iterable[T] = map(fn, seeds)
        return list(tqdm(iterator, total=len(seeds), desc=desc, disable=not show))

    workers = min(threads, len(seeds))
    chunksize = max(1, len(seeds) // (workers * 8))
    logger.debug(f"running {len(seeds)} replicates on {workers} processes")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        iterator = pool.map(fn, seeds, chunksize=chunksize)
        return list(tqdm(iterator, total=len(seeds), desc=desc, disable=not show))
