"""Seed streams.

Every stochastic routine takes a ``seed`` that may be an int, a
``numpy.random.SeedSequence`` or a ``numpy.random.Generator``.  Work that is
split into chunks derives one child sequence per chunk, so results do not
depend on how many workers process the chunks.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar, Union

import numpy as np

from ._accel import max_workers

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]
T = TypeVar("T")


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return seed.bit_generator.seed_seq
    return np.random.SeedSequence(seed)


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(as_seed_sequence(seed))


def spawn(seed: SeedLike, k: int) -> List[np.random.SeedSequence]:
    """``k`` independent child sequences.

    Spawning from a Generator consumes nothing from it, but children of the
    same SeedSequence object differ between calls; pass ints or fresh
    sequences when the caller needs repeatability across calls.
    """
    ss = as_seed_sequence(seed)
    # spawn() is stateful on the parent; derive from entropy/spawn_key instead
    return [
        np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,))
        for i in range(k)
    ]


def chunk_sizes(total: int, chunk: int) -> List[int]:
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[int, np.random.SeedSequence], T],
    total: int,
    chunk: int,
    seed: SeedLike,
) -> List[T]:
    """Run ``fn(size, seedseq)`` over replication chunks, results in order."""
    sizes = chunk_sizes(total, chunk)
    seeds = spawn(seed, len(sizes))
    workers = min(max_workers(), len(sizes))
    if workers <= 1:
        return [fn(s, q) for s, q in zip(sizes, seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, sizes, seeds))


def derive(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Deterministic child sequence addressed by integer keys."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + tuple(keys))

