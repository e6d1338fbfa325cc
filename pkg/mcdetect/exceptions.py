"""
Errors, and the occasional statistical warning.
"""

from __future__ import annotations

from typing import Any

import attrs

from mcdetect._attrs import frozen


class _Structural:
    """
    Structural equality for exception records.

    Exceptions otherwise compare by identity, which makes them awkward to
    assert against.
    """

    def __eq__(self, other: object) -> bool:
        if self.__class__ is not other.__class__:
            return NotImplemented
        return attrs.astuple(self) == attrs.astuple(other)

    def __hash__(self) -> int:
        return hash(attrs.astuple(self))


@frozen
class ErfcxOverflow(_Structural, ArithmeticError):
    """
    The scaled complementary error function left the representable range.
    """

    z: complex

    def __str__(self) -> str:
        return f"erfcx({self.z!r}) is not representable as a double"


@frozen
class OutOfDomain(_Structural, ValueError):
    """
    An argument violates the documented precondition of an operation.
    """

    name: str
    value: Any
    constraint: str

    def __str__(self) -> str:
        return f"{self.name}={self.value!r} violates {self.constraint}"


@frozen
class DegenerateRoots(_Structural, ArithmeticError):
    """
    Two roots of the channel cubic (nearly) coincide.

    The activation probability and steady-state mean divide by pairwise root
    differences, so evaluating them here would silently amplify error.
    """

    roots: tuple[complex, complex, complex]
    separation: float

    def __str__(self) -> str:
        return (
            f"roots {self.roots!r} are separated by only "
            f"{self.separation:.3g} (relative), which is degenerate"
        )


@frozen
class ImaginaryResidue(_Structural, ArithmeticError):
    """
    A quantity which is real by construction came out with an imaginary part.

    This indicates a numerical defect rather than noise, so it is never
    silently discarded.
    """

    value: complex
    tolerance: float

    def __str__(self) -> str:
        return (
            f"{self.value!r} should be real but its imaginary part exceeds "
            f"{self.tolerance:g}"
        )


@frozen
class ProbabilityOutOfRange(_Structural, ArithmeticError):
    """
    A probability left ``[0, 1]`` by more than rounding can explain.
    """

    value: float
    tolerance: float

    def __str__(self) -> str:
        return (
            f"probability {self.value!r} lies outside [0, 1] by more than "
            f"{self.tolerance:g}"
        )


@frozen
class QuadratureDidNotConverge(_Structural, ArithmeticError):
    """
    Adaptive quadrature exhausted its subdivision budget.
    """

    upper: float
    estimate: float
    error: float
    message: str

    def __str__(self) -> str:
        return (
            f"integral over (0, {self.upper!r}] did not converge: estimate "
            f"{self.estimate!r} +/- {self.error!r} ({self.message.strip()})"
        )


@frozen
class SteadyStateUndefined(_Structural, ValueError):
    """
    The steady-state mean does not exist for the given link parameters.
    """

    reason: str

    def __str__(self) -> str:
        return f"no finite steady state: {self.reason}"


@frozen
class InsideReceiver(_Structural, ValueError):
    """
    A source was placed on or inside a receiver sphere.
    """

    distance: float
    radius: float

    def __str__(self) -> str:
        return (
            f"distance {self.distance!r} μm does not exceed the receiver "
            f"radius {self.radius!r} μm"
        )


@frozen
class DegenerateTransitionProbability(_Structural, ArithmeticError):
    """
    A transition probability is exactly 0 or 1 where a log-ratio needs it.
    """

    indices: tuple[int, ...]

    def __str__(self) -> str:
        return (
            f"transition probabilities of sensors {list(self.indices)} are "
            "exactly 0 or 1, so their log-likelihood ratio is undefined"
        )


@frozen
class NoSignalGeometry(_Structural, ArithmeticError):
    """
    No candidate target position carries any local information.

    Every candidate has all G-LOD weights equal to zero, so the normalized
    score is 0/0 everywhere.
    """

    candidates: int

    def __str__(self) -> str:
        return (
            f"all {self.candidates} candidate target positions have zero "
            "Fisher information at μ = 0"
        )


@frozen
class PlacementFailed(_Structural, RuntimeError):
    """
    Sensors could not be placed while honoring the spacing constraints.
    """

    placed: int
    requested: int
    attempts: int

    def __str__(self) -> str:
        return (
            f"placed only {self.placed} of {self.requested} sensors after "
            f"{self.attempts} attempts"
        )


@frozen
class InvalidConfiguration(_Structural, ValueError):
    """
    A configuration was rejected.

    All problems found are reported at once rather than only the first.
    """

    problems: tuple[str, ...]

    def __str__(self) -> str:
        lines = "\n".join(f"  - {each}" for each in self.problems)
        count = len(self.problems)
        return f"invalid configuration ({count} problems):\n{lines}"


class InsufficientCalibrationSamples(UserWarning):
    """
    Too few samples to estimate a false alarm threshold reliably.

    Emitted when fewer than 20 calibration samples are expected to exceed
    the threshold.
    """
