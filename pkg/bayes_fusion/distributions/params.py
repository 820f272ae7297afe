"""
Parameter functions of the hidden object h.

A sensor family is parametrised by functions of h (the mean of a Gaussian, the
rate of an exponential, the scale of a covariance factor). Each function maps an
array of h values of any shape to an array of shape ``(*h.shape, *self.shape)``.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from bayes_fusion.exceptions import InputDomainError


class ParamFn:
    """Base class for parameter functions of h."""

    shape: Tuple[int, ...] = ()

    def __call__(self, h: Any) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False

    def describe(self) -> Dict[str, Any]:
        raise NotImplementedError

    def _expand(self, h: Any) -> np.ndarray:
        values = np.asarray(h, dtype=float)
        return values.reshape(values.shape + (1,) * len(self.shape))


@dataclass(frozen=True, eq=False)
class Constant(ParamFn):
    """Parameter that does not depend on h."""

    value: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))

    @property
    def shape(self) -> Tuple[int, ...]:  # type: ignore[override]
        return self.value.shape

    @property
    def is_constant(self) -> bool:
        return True

    def __call__(self, h: Any) -> np.ndarray:
        values = np.asarray(h, dtype=float)
        return np.broadcast_to(self.value, values.shape + self.value.shape)

    def describe(self) -> Dict[str, Any]:
        return {"form": "constant", "value": self.value.tolist()}


@dataclass(frozen=True, eq=False)
class Affine(ParamFn):
    """offset + slope * h, elementwise over the parameter shape."""

    offset: np.ndarray
    slope: np.ndarray

    def __post_init__(self) -> None:
        offset = np.asarray(self.offset, dtype=float)
        slope = np.asarray(self.slope, dtype=float)
        try:
            offset, slope = np.broadcast_arrays(offset, slope)
        except ValueError as e:
            raise InputDomainError(f"Affine offset and slope shapes disagree: {e}") from e
        object.__setattr__(self, "offset", np.array(offset))
        object.__setattr__(self, "slope", np.array(slope))

    @property
    def shape(self) -> Tuple[int, ...]:  # type: ignore[override]
        return self.offset.shape

    @property
    def is_constant(self) -> bool:
        return not np.any(self.slope)

    def __call__(self, h: Any) -> np.ndarray:
        return self.offset + self.slope * self._expand(h)

    def describe(self) -> Dict[str, Any]:
        return {"form": "affine", "offset": self.offset.tolist(), "slope": self.slope.tolist()}


@dataclass(frozen=True, eq=False)
class Power(ParamFn):
    """scale * |h| ** exponent."""

    scale: np.ndarray
    exponent: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "exponent", float(self.exponent))

    @property
    def shape(self) -> Tuple[int, ...]:  # type: ignore[override]
        return self.scale.shape

    @property
    def is_constant(self) -> bool:
        return self.exponent == 0.0

    def __call__(self, h: Any) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.scale * np.abs(self._expand(h)) ** self.exponent

    def describe(self) -> Dict[str, Any]:
        return {"form": "power", "scale": self.scale.tolist(), "exponent": self.exponent}


@dataclass(frozen=True, eq=False)
class Table(ParamFn):
    """Lookup table over the points of a discrete object space."""

    points: np.ndarray
    values: np.ndarray
    _shape: Tuple[int, ...] = field(init=False, default=())

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if points.ndim != 1 or values.shape[:1] != points.shape:
            raise InputDomainError(
                f"Table needs one value row per point, got {values.shape} for {points.shape}"
            )
        if np.any(np.diff(points) <= 0):
            raise InputDomainError("Table points must be strictly sorted")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_shape", values.shape[1:])

    @property
    def shape(self) -> Tuple[int, ...]:  # type: ignore[override]
        return self._shape

    def __call__(self, h: Any) -> np.ndarray:
        values = np.asarray(h, dtype=float)
        index = np.clip(np.searchsorted(self.points, values), 0, len(self.points) - 1)
        if not np.all(self.points[index] == values):
            raise InputDomainError("Table parameter evaluated at an h outside its points")
        return self.values[index]

    def describe(self) -> Dict[str, Any]:
        return {"form": "table", "points": self.points.tolist(), "values": self.values.tolist()}


ParamLike = Union[ParamFn, float, Sequence[Any], np.ndarray]


def as_param(value: ParamLike) -> ParamFn:
    """Wrap plain numbers and arrays as Constant parameters."""
    if isinstance(value, ParamFn):
        return value
    return Constant(np.asarray(value, dtype=float))
