"""
Object, feature and decision spaces, and the cost functions defined on them.

These are the static ingredients of a fusion problem: the object space I that
the hidden quantity H lives in, the feature space J_m of each sensor, the
decision space K of the fusion center and the cost W(c - h).
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from bayes_fusion.exceptions import InputDomainError


def _strictly_sorted(points: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(points, points[1:]))


@dataclass(frozen=True)
class ObjectSpace:
    """Range of the hidden object H: a closed interval or a finite point list."""

    lo: float
    hi: float
    points: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.points is not None:
            if not self.points:
                raise InputDomainError("Discrete object space must contain at least one point")
            if not _strictly_sorted(self.points):
                raise InputDomainError(f"Object points must be strictly sorted: {self.points}")
            if self.lo != self.points[0] or self.hi != self.points[-1]:
                raise InputDomainError("Discrete object space bounds must match its points")
        elif not self.lo < self.hi:
            raise InputDomainError(f"Object interval requires lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ObjectSpace":
        return cls(lo=float(lo), hi=float(hi))

    @classmethod
    def discrete(cls, points: Iterable[float]) -> "ObjectSpace":
        pts = tuple(float(p) for p in points)
        if not pts:
            raise InputDomainError("Discrete object space must contain at least one point")
        return cls(lo=pts[0], hi=pts[-1], points=pts)

    @property
    def is_discrete(self) -> bool:
        return self.points is not None

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def point_array(self) -> np.ndarray:
        if self.points is None:
            raise InputDomainError("Continuous object space has no point list")
        return np.asarray(self.points, dtype=float)

    def contains(self, h: Any) -> np.ndarray:
        values = np.asarray(h, dtype=float)
        if self.points is not None:
            return np.isin(values, self.point_array)
        return (values >= self.lo) & (values <= self.hi)

    def describe(self) -> Dict[str, Any]:
        if self.points is not None:
            return {"kind": "discrete", "points": list(self.points)}
        return {"kind": "interval", "lo": self.lo, "hi": self.hi}


class FeatureDomain(str, enum.Enum):
    """Per-dimension domain of a sensor feature."""

    REAL = "real"
    HALF_LINE = "half-line"
    INTERVAL = "interval"
    NONNEGATIVE_INTEGERS = "nonnegative-integers"
    FINITE = "finite"


@dataclass(frozen=True)
class FeatureSpace:
    """Feature space J_m of a single sensor."""

    dims: int
    domain: FeatureDomain = FeatureDomain.REAL
    lo: float = -math.inf
    hi: float = math.inf
    levels: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.dims < 1:
            raise InputDomainError(f"Feature space needs dims >= 1, got {self.dims}")

    @property
    def is_discrete(self) -> bool:
        return self.domain in (FeatureDomain.NONNEGATIVE_INTEGERS, FeatureDomain.FINITE)

    def contains(self, a: Any) -> np.ndarray:
        """Return a boolean per feature vector (last axis holds the dims)."""
        values = np.asarray(a, dtype=float)
        if values.shape[-1] != self.dims:
            raise InputDomainError(
                f"Feature vector has {values.shape[-1]} components, expected {self.dims}"
            )
        ok = np.isfinite(values) | (self.domain == FeatureDomain.REAL) & ~np.isnan(values)
        if self.domain == FeatureDomain.HALF_LINE:
            ok &= values >= 0
        elif self.domain == FeatureDomain.INTERVAL:
            ok &= (values >= self.lo) & (values <= self.hi)
        elif self.domain == FeatureDomain.NONNEGATIVE_INTEGERS:
            ok &= (values >= 0) & (values == np.floor(values))
        elif self.domain == FeatureDomain.FINITE and self.levels is not None:
            ok &= np.isin(values, np.asarray(self.levels, dtype=float))
        return np.all(ok, axis=-1)


@dataclass(frozen=True)
class DecisionSpace:
    """Closed decision space K: an interval, a union of intervals, or a point list."""

    intervals: Tuple[Tuple[float, float], ...] = ()
    points: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.points is not None:
            if self.intervals:
                raise InputDomainError("Decision space is either discrete or interval-based")
            if not self.points:
                raise InputDomainError("Discrete decision space must be non-empty")
            if not _strictly_sorted(self.points):
                raise InputDomainError(f"Decision points must be strictly sorted: {self.points}")
            return
        if not self.intervals:
            raise InputDomainError("Decision space must be non-empty")
        for lo, hi in self.intervals:
            if not lo <= hi:
                raise InputDomainError(f"Decision interval [{lo}, {hi}] is empty")
        for (_, prev_hi), (next_lo, _) in zip(self.intervals, self.intervals[1:]):
            if not next_lo > prev_hi:
                raise InputDomainError("Decision intervals must be sorted and disjoint")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "DecisionSpace":
        return cls(intervals=((float(lo), float(hi)),))

    @classmethod
    def real_line(cls) -> "DecisionSpace":
        return cls.interval(-math.inf, math.inf)

    @classmethod
    def discrete(cls, points: Iterable[float]) -> "DecisionSpace":
        return cls(points=tuple(float(p) for p in points))

    @classmethod
    def union(cls, intervals: Iterable[Sequence[float]]) -> "DecisionSpace":
        return cls(intervals=tuple((float(lo), float(hi)) for lo, hi in intervals))

    @property
    def kind(self) -> str:
        if self.points is not None:
            return "discrete"
        return "interval" if len(self.intervals) == 1 else "union"

    @property
    def is_discrete(self) -> bool:
        return self.points is not None

    @property
    def lo(self) -> float:
        return self.points[0] if self.points is not None else self.intervals[0][0]

    @property
    def hi(self) -> float:
        return self.points[-1] if self.points is not None else self.intervals[-1][1]

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def is_real_line(self) -> bool:
        return self.kind == "interval" and self.lo == -math.inf and self.hi == math.inf

    @property
    def point_array(self) -> np.ndarray:
        if self.points is None:
            raise InputDomainError("Continuous decision space has no point list")
        return np.asarray(self.points, dtype=float)

    def contains(self, x: Any) -> np.ndarray:
        values = np.asarray(x, dtype=float)
        if self.points is not None:
            return np.isin(values, self.point_array)
        inside = np.zeros(values.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (values >= lo) & (values <= hi)
        return inside

    def covers(self, space: ObjectSpace) -> bool:
        """True when K is a single interval containing I."""
        return self.kind == "interval" and self.lo <= space.lo and space.hi <= self.hi

    def describe(self) -> Dict[str, Any]:
        if self.points is not None:
            return {"kind": "discrete", "points": list(self.points)}
        if len(self.intervals) == 1:
            return {"kind": "interval", "lo": self.lo, "hi": self.hi}
        return {"kind": "union", "intervals": [list(pair) for pair in self.intervals]}


@dataclass(frozen=True)
class CostFunction:
    """Even convex polynomial cost W(x) = sum_p c_p x^p with x = c - h."""

    terms: Tuple[Tuple[int, float], ...] = field(default_factory=tuple)
    label: str = "polynomial"

    def __post_init__(self) -> None:
        for power, coefficient in self.terms:
            if power < 0 or power % 2:
                raise InputDomainError(f"Cost powers must be even and nonnegative, got {power}")
            if coefficient < 0:
                raise InputDomainError(f"Cost coefficients must be nonnegative, got {coefficient}")

    @classmethod
    def quadratic(cls) -> "CostFunction":
        return cls(terms=((2, 0.5),), label="quadratic")

    @classmethod
    def squared_error(cls) -> "CostFunction":
        return cls(terms=((2, 1.0),), label="squared")

    @classmethod
    def even_power(cls, p: int) -> "CostFunction":
        if p < 2 or p % 2:
            raise InputDomainError(f"Even power cost needs an even p >= 2, got {p}")
        return cls(terms=((p, 1.0 / p),), label=f"power:{p}")

    @classmethod
    def polynomial(cls, coefficients: Mapping[int, float]) -> "CostFunction":
        terms = tuple(sorted((int(p), float(c)) for p, c in coefficients.items() if c != 0))
        body = ",".join(f"{p}={c!r}" for p, c in terms)
        return cls(terms=terms, label=f"poly:{body}" if terms else "zero")

    @classmethod
    def zero(cls) -> "CostFunction":
        return cls(terms=(), label="zero")

    @classmethod
    def parse(cls, text: str) -> "CostFunction":
        """
        Parse a cost label.

        Accepted forms: ``quadratic``, ``squared``, ``zero``, ``power:<p>`` and
        ``poly:<p>=<c>,<p>=<c>``.
        """
        value = text.strip().lower()
        if value == "quadratic":
            return cls.quadratic()
        if value == "squared":
            return cls.squared_error()
        if value == "zero":
            return cls.zero()
        try:
            if value.startswith("power:"):
                return cls.even_power(int(value.split(":", 1)[1]))
            if value.startswith("poly:"):
                pairs = [item.split("=") for item in value.split(":", 1)[1].split(",") if item]
                return cls.polynomial({int(p): float(c) for p, c in pairs})
        except ValueError as e:
            raise InputDomainError(f"Malformed cost specification '{text}': {e}") from e
        raise InputDomainError(f"Unknown cost specification '{text}'")

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, x: Any) -> np.ndarray:
        values = np.asarray(x, dtype=float)
        total = np.zeros_like(values)
        for power, coefficient in self.terms:
            total = total + coefficient * values**power
        return total

    def squared(self) -> "CostFunction":
        """The cost W(x)^2, itself an even polynomial."""
        coefficients: Dict[int, float] = {}
        for p1, c1 in self.terms:
            for p2, c2 in self.terms:
                coefficients[p1 + p2] = coefficients.get(p1 + p2, 0.0) + c1 * c2
        return CostFunction.polynomial(coefficients)
