"""
Type-annotation related support for mcdetect.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Protocol, Union

import numpy as np
import numpy.typing as npt

#: A position in the medium, in μm.
Vector3 = npt.NDArray[np.float64]

#: Either a single number or an array of them, evaluated elementwise.
RealLike = Union[float, npt.ArrayLike]

#: A real function of time (in s), as integrated by
#: `mcdetect.numerics.integrate_transient`.
Integrand = Callable[[float], float]


class StatisticSampler(Protocol):
    """
    Draws detector statistics under one hypothesis.

    Used by `mcdetect.detection.calibrate_threshold`, which only needs a way
    to obtain independent samples and never looks at how they were produced.
    """

    def __call__(
        self,
        rng: np.random.Generator,
        size: int,
    ) -> npt.NDArray[np.float64]:
        """
        Return ``size`` independent statistics drawn with ``rng``.
        """
        ...


class BatchStatistic(Protocol):
    """
    A fusion center statistic, bound to its network, evaluated on many
    decision vectors at once.
    """

    def __call__(
        self,
        decisions: npt.NDArray[np.int8],
    ) -> npt.NDArray[np.float64]:
        """
        Return one statistic per row of the ``(n, K)`` decision matrix.
        """
        ...
