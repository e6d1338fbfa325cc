from __future__ import annotations

from typing import TYPE_CHECKING, Any, NoReturn, TypeVar
import math

from attrs import cmp_using, frozen as _frozen
import numpy as np

if TYPE_CHECKING:
    from attrs import Attribute

    from mcdetect.typing import Vector3

_T = TypeVar("_T")


def frozen(cls: type[_T]) -> type[_T]:
    cls.__init_subclass__ = _do_not_subclass
    return _frozen(cls)


class UnsupportedSubclassing(Exception):
    def __str__(self):
        return (
            "Subclassing mcdetect's records is not part of its public API. "
            "Compose them instead, or build a new record with attrs.evolve."
        )


@staticmethod
def _do_not_subclass() -> NoReturn:  # pragma: no cover
    raise UnsupportedSubclassing()


def _finite(attribute: Attribute[Any], value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{attribute.name} must be finite, got {value!r}")


def positive(instance: object, attribute: Attribute[Any], value: float):
    """
    An attrs validator for finite, strictly positive numbers.
    """
    _finite(attribute, value)
    if value <= 0:
        raise ValueError(f"{attribute.name} must be > 0, got {value!r}")


def non_negative(instance: object, attribute: Attribute[Any], value: float):
    """
    An attrs validator for finite numbers which are at least 0.
    """
    _finite(attribute, value)
    if value < 0:
        raise ValueError(f"{attribute.name} must be >= 0, got {value!r}")


def probability(instance: object, attribute: Attribute[Any], value: Any):
    """
    An attrs validator for a probability or an array of them.
    """
    array = np.asarray(value, dtype=float)
    if not np.all((array >= 0) & (array <= 1)):
        raise ValueError(f"{attribute.name} must lie in [0, 1], got {value!r}")


def vector3(value: Any) -> Vector3:
    """
    Convert a length-3 sequence into a read-only float array.
    """
    array = np.array(value, dtype=float)
    if array.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {array.shape}")
    array.flags.writeable = False
    return array


def points(value: Any) -> np.ndarray:
    """
    Convert a sequence of 3-vectors into a read-only ``(n, 3)`` array.
    """
    array = np.array(value, dtype=float).reshape(-1, 3)
    array.flags.writeable = False
    return array


def readonly(value: Any) -> np.ndarray:
    """
    Convert to a read-only float array of whatever shape was given.
    """
    array = np.array(value, dtype=float)
    array.flags.writeable = False
    return array


#: Field comparison for array-valued attributes.
ARRAY_EQ = cmp_using(eq=np.array_equal)


def counts(value: Any) -> np.ndarray:
    """
    Convert to a read-only integer array of whatever shape was given.
    """
    array = np.array(value, dtype=np.int64)
    array.flags.writeable = False
    return array
