"""Deterministic seed splitting.

Every random draw in the package comes from a stream identified by
``(master seed, task name, grid index, chunk index)``:

* the task name is hashed with CRC-32 (stable across platforms and Python
  versions, unlike :func:`hash`);
* the tuple ``(crc32(task), grid_index, chunk_index)`` is used as the
  ``spawn_key`` of a :class:`numpy.random.SeedSequence` whose entropy is the
  master seed.

Results therefore depend only on the seed and the chunk size, never on how
chunks are scheduled across threads.
"""

from __future__ import annotations

import zlib

import numpy as np

DEFAULT_CHUNK = 2**14


def task_seed(master: int, task: str = "", index: int = 0) -> np.random.SeedSequence:
    """Seed sequence for one task / grid point."""
    if master < 0:
        raise ValueError("master seed must be nonnegative")
    key = (zlib.crc32(task.encode("utf-8")), int(index))
    return np.random.SeedSequence(int(master), spawn_key=key)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return task_seed(int(seed))


def chunk_rng(seed, chunk: int) -> np.random.Generator:
    """Generator for chunk ``chunk`` of the stream identified by ``seed``."""
    seq = as_seed_sequence(seed)
    child = np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (int(chunk),))
    return np.random.default_rng(child)


def chunk_sizes(n: int, chunk_size: int = DEFAULT_CHUNK) -> list[int]:
    if n < 1:
        raise ValueError("replicate count must be positive")
    if chunk_size < 1:
        raise ValueError("chunk size must be positive")
    full, rest = divmod(int(n), int(chunk_size))
    return [chunk_size] * full + ([rest] if rest else [])
