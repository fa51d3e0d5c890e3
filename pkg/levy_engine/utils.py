"""
Utility functions for the Lévy engine: reproducible random streams and
worker-count resolution.
"""

import os
from enum import IntEnum
from typing import List, Optional, Tuple

import numpy as np


WORKERS_ENV_VAR = "FBSDE_NUM_WORKERS"


class StreamTag(IntEnum):
    """Purpose tags separating the independent random sequences of one path."""
    EPOCHS = 1
    MARKS = 2
    TIMES = 3
    BROWNIAN = 4
    BRIDGE = 5


def make_stream(seed: int, path_index: int, tag: StreamTag) -> np.random.Generator:
    """
    Create the random stream for one path and one purpose.

    Streams are Philox (counter-based) generators keyed by a SeedSequence whose
    spawn key is ``(path_index, tag)``. Any path can therefore be regenerated in
    isolation, and results never depend on the order in which paths are
    scheduled.

    Args:
        seed: Master seed of the study
        path_index: Index of the path within the ensemble
        tag: Purpose of the stream

    Returns:
        np.random.Generator backed by Philox
    """
    if seed is None:
        raise ValueError("A master seed is mandatory for reproducible streams")
    sequence = np.random.SeedSequence(
        entropy=int(seed),
        spawn_key=(int(path_index), int(tag))
    )
    return np.random.Generator(np.random.Philox(sequence))


def resolve_num_workers(requested: Optional[int] = None) -> int:
    """
    Get the number of worker threads for per-path sampling.

    Priority:
    1. Explicit request
    2. FBSDE_NUM_WORKERS environment variable
    3. Single worker

    Returns:
        Number of workers (at least 1)
    """
    if requested is not None:
        return max(1, int(requested))
    value = os.environ.get(WORKERS_ENV_VAR)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ValueError(f"{WORKERS_ENV_VAR} must be an integer, got {value!r}")
    return 1


def chunk_ranges(total: int, chunk_size: int) -> List[Tuple[int, int]]:
    """Split ``range(total)`` into consecutive ``(start, stop)`` blocks."""
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    return [(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]
