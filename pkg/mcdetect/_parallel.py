"""
Deterministic fan-out of seeded jobs.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from enum import IntEnum
from typing import TYPE_CHECKING, TypeVar
import logging

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

_J = TypeVar("_J")
_R = TypeVar("_R")

logger = logging.getLogger(__name__)


class Stream(IntEnum):
    """
    Independent families of random streams derived from one master seed.
    """

    PARTICLES = 0
    TOPOLOGY = 1
    CALIBRATION = 2
    EVALUATION_H0 = 3
    EVALUATION_H1 = 4


def generator(seed: int, stream: Stream, *key: int) -> np.random.Generator:
    """
    The generator for one batch of one stream.

    Generators for distinct ``(stream, *key)`` are statistically independent
    and never depend on how work is later scheduled.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(int(stream), *key))
    return np.random.default_rng(sequence)


def batches(total: int, size: int) -> list[tuple[int, int]]:
    """
    Split ``total`` trials into ``(index, count)`` batches of ``size``.
    """
    return [
        (index, min(size, total - start))
        for index, start in enumerate(range(0, total, size))
    ]


def seeded_map(
    function: Callable[[_J], _R],
    jobs: Iterable[_J],
    workers: int = 1,
) -> list[_R]:
    """
    Apply ``function`` to every job, returning results in job order.

    Jobs must carry their own seed material; with ``workers > 1`` they run in
    a process pool, so ``function`` and the jobs must be picklable.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [function(job) for job in jobs]
    logger.debug("running %d jobs on %d workers", len(jobs), workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, jobs))
