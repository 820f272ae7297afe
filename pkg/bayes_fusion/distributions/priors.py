"""
Prior densities d_H over the object space.

Each prior carries a fixed quadrature rule used by the posterior-mean fusion
rule. ``quadrature()`` returns nodes and *log* weights that already include the
prior density, so that

    integral of g(h) d_H(h) dh  ~=  sum(exp(log_weights) * g(nodes))

and discrete priors are the exact special case (nodes = points, weights = w_i).
"""

import logging
import math
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from bayes_fusion.distributions.quadrature import (
    GAUSS_HERMITE,
    GAUSS_LAGUERRE,
    GAUSS_LEGENDRE,
    LOG_TRAPEZOID,
    TRAPEZOID,
    QuadratureRule,
    gauss_hermite,
    gauss_laguerre,
    gauss_legendre,
    log_trapezoid,
    log_trapezoid_size,
    trapezoid,
)
from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.spaces import ObjectSpace

logger = logging.getLogger(__name__)

PROPOSAL_PRIOR = "prior"
PROPOSAL_UNIFORM = "uniform"
PROPOSAL_MODES = (PROPOSAL_PRIOR, PROPOSAL_UNIFORM)

WEIGHT_SUM_TOLERANCE = 1e-12
TABULATED_INTEGRAL_TOLERANCE = 1e-6
# Default exponential nodes, in units of the mean 1 / rate, spaced 0.1 apart in log h
EXPONENTIAL_SPAN = (1e-20, 750.0)
EXPONENTIAL_LOG_STEP = 0.1


class Prior:
    """Base class for priors over an ObjectSpace."""

    space: ObjectSpace
    rule: Optional[QuadratureRule] = None

    # Quadrature

    def quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (nodes, log_weights) with the prior density folded into the weights."""
        return self._quadrature

    @cached_property
    def _quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        nodes, log_weights = self._build_quadrature()
        nodes.setflags(write=False)
        log_weights.setflags(write=False)
        return nodes, log_weights

    def _build_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _span_rule(self, rule: QuadratureRule) -> Tuple[np.ndarray, np.ndarray]:
        """Legendre, trapezoid or log-trapezoid rule on a finite span, weighted by the density."""
        assert rule.span is not None
        lo, hi = rule.span
        if rule.kind == GAUSS_LEGENDRE:
            nodes, weights = gauss_legendre(lo, hi, rule.nodes)
        elif rule.kind == TRAPEZOID:
            nodes, weights = trapezoid(lo, hi, rule.nodes)
        elif rule.kind == LOG_TRAPEZOID:
            nodes, weights = log_trapezoid(lo, hi, rule.nodes, rule.knee)
        else:
            raise InputDomainError(f"{rule.kind} rule is not available for {type(self).__name__}")
        with np.errstate(divide="ignore"):
            log_weights = np.log(weights) + self.log_pdf(nodes)
        keep = np.isfinite(log_weights)
        return nodes[keep], log_weights[keep]

    # Density

    def log_pdf(self, h: Any) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, h: Any) -> np.ndarray:
        return np.exp(self.log_pdf(h))

    def cdf(self, h: Any) -> np.ndarray:
        raise NotImplementedError

    def bin_masses(self, edges: Sequence[float]) -> np.ndarray:
        """Prior mass of each bin [edges[i], edges[i+1])."""
        return np.diff(self.cdf(np.asarray(edges, dtype=float)))

    def default_window(self) -> Tuple[float, float]:
        return self.space.lo, self.space.hi

    # Sampling

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def proposal_sample(
        self, size: int, mode: str, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Draw h from the proposal d_{H'} with importance weights d_H(h) / d_{H'}(h).

        Args:
            size: Number of draws
            mode: "prior" (H' = H, unit weights) or "uniform" (H' uniform on I)
            rng: Random stream

        Returns:
            Tuple of (h, weights)

        Raises:
            UnsupportedConfigurationError: Uniform mode on an unbounded object space
        """
        if mode == PROPOSAL_PRIOR:
            return self.sample(size, rng), np.ones(size)
        if mode != PROPOSAL_UNIFORM:
            raise InputDomainError(f"Unknown proposal mode '{mode}', expected {PROPOSAL_MODES}")
        if not self.space.is_bounded:
            raise UnsupportedConfigurationError(
                f"Uniform proposal needs a bounded object space, got "
                f"[{self.space.lo}, {self.space.hi}]"
            )
        h = rng.uniform(self.space.lo, self.space.hi, size=size)
        return h, self.pdf(h) * (self.space.hi - self.space.lo)

    def describe(self) -> Dict[str, Any]:
        raise NotImplementedError

    def _describe_rule(self, doc: Dict[str, Any]) -> Dict[str, Any]:
        if self.rule is not None:
            doc["quadrature"] = self.rule.describe()
        return doc


class DiscretePrior(Prior):
    """Weighted sum of point masses over a finite object space."""

    def __init__(self, points: Sequence[float], weights: Sequence[float]):
        self.space = ObjectSpace.discrete(points)
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (len(self.space.point_array),):
            raise InputDomainError(
                f"Discrete prior needs one weight per point, got {self.weights.shape}"
            )
        if np.any(self.weights < 0):
            raise InputDomainError("Discrete prior weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InputDomainError(
                f"Discrete prior weights must sum to 1, got {self.weights.sum()!r}"
            )

    @classmethod
    def uniform(cls, points: Sequence[float]) -> "DiscretePrior":
        n = len(points)
        return cls(points, [1.0 / n] * n)

    @property
    def points(self) -> np.ndarray:
        return self.space.point_array

    def _build_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        keep = self.weights > 0
        return self.points[keep].copy(), np.log(self.weights[keep])

    def _index(self, h: Any) -> Tuple[np.ndarray, np.ndarray]:
        values = np.asarray(h, dtype=float)
        index = np.clip(np.searchsorted(self.points, values), 0, len(self.points) - 1)
        return index, self.points[index] == values

    def log_pdf(self, h: Any) -> np.ndarray:
        index, exact = self._index(h)
        with np.errstate(divide="ignore"):
            return np.where(exact, np.log(self.weights[index]), -np.inf)

    def cdf(self, h: Any) -> np.ndarray:
        cumulative = np.concatenate(([0.0], np.cumsum(self.weights)))
        return cumulative[np.searchsorted(self.points, np.asarray(h, dtype=float), side="right")]

    def bin_masses(self, edges: Sequence[float]) -> np.ndarray:
        """Mass per bin [e_i, e_{i+1}); the last bin is closed on the right."""
        bounds = np.asarray(edges, dtype=float)
        index = np.searchsorted(bounds, self.points, side="right") - 1
        index = np.where(self.points == bounds[-1], len(bounds) - 2, index)
        inside = (index >= 0) & (index < len(bounds) - 1)
        return np.bincount(index[inside], weights=self.weights[inside], minlength=len(bounds) - 1)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.points, size=size, p=self.weights)

    def proposal_sample(
        self, size: int, mode: str, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        if mode != PROPOSAL_UNIFORM:
            return super().proposal_sample(size, mode, rng)
        index = rng.integers(0, len(self.points), size=size)
        return self.points[index], self.weights[index] * len(self.points)

    def describe(self) -> Dict[str, Any]:
        return {
            "form": "discrete",
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }


class StandardNormalPrior(Prior):
    """N(0, 1) prior on the real line; 64-node Gauss-Hermite by default."""

    def __init__(self, rule: Optional[QuadratureRule] = None):
        self.space = ObjectSpace.interval(-math.inf, math.inf)
        self.rule = rule

    def _build_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        rule = self.rule or QuadratureRule(GAUSS_HERMITE, 64)
        if rule.kind == GAUSS_HERMITE:
            nodes, weights = gauss_hermite(rule.nodes)
            return nodes, np.log(weights)
        return self._span_rule(rule)

    def log_pdf(self, h: Any) -> np.ndarray:
        return stats.norm.logpdf(np.asarray(h, dtype=float))

    def cdf(self, h: Any) -> np.ndarray:
        return stats.norm.cdf(np.asarray(h, dtype=float))

    def default_window(self) -> Tuple[float, float]:
        return -4.0, 4.0

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(size)

    def describe(self) -> Dict[str, Any]:
        return self._describe_rule({"form": "standard-normal"})


class ExponentialPrior(Prior):
    """
    Exponential(rate) prior on [0, inf).

    The default rule places nodes 0.1 apart in log h between 1e-20 and 750 mean
    lifetimes. Gauss-Laguerre remains available as an override.
    """

    def __init__(self, rate: float = 1.0, rule: Optional[QuadratureRule] = None):
        if not rate > 0:
            raise InputDomainError(f"Exponential prior rate must be positive, got {rate}")
        self.rate = float(rate)
        self.space = ObjectSpace.interval(0.0, math.inf)
        self.rule = rule

    def _build_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        rule = self.rule or self.default_rule(self.rate)
        if rule.kind == GAUSS_LAGUERRE:
            nodes, weights = gauss_laguerre(rule.nodes)
            return nodes / self.rate, np.log(weights)
        return self._span_rule(rule)

    @staticmethod
    def default_rule(rate: float = 1.0, step: float = EXPONENTIAL_LOG_STEP) -> QuadratureRule:
        lo, hi = (value / rate for value in EXPONENTIAL_SPAN)
        return QuadratureRule(LOG_TRAPEZOID, log_trapezoid_size(lo, hi, step), (lo, hi))

    def log_pdf(self, h: Any) -> np.ndarray:
        return stats.expon.logpdf(np.asarray(h, dtype=float), scale=1.0 / self.rate)

    def cdf(self, h: Any) -> np.ndarray:
        return stats.expon.cdf(np.asarray(h, dtype=float), scale=1.0 / self.rate)

    def default_window(self) -> Tuple[float, float]:
        return 0.0, float(stats.expon.ppf(0.999, scale=1.0 / self.rate))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, size=size)

    def describe(self) -> Dict[str, Any]:
        return self._describe_rule({"form": "exponential", "rate": self.rate})


class TruncatedNormalPrior(Prior):
    """Normal(mean, std) restricted to a bounded interval [lo, hi]."""

    def __init__(
        self,
        lo: float,
        hi: float,
        mean: float = 0.0,
        std: float = 1.0,
        rule: Optional[QuadratureRule] = None,
    ):
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InputDomainError("Truncated normal prior needs a bounded interval")
        if not std > 0:
            raise InputDomainError(f"Truncated normal std must be positive, got {std}")
        self.space = ObjectSpace.interval(lo, hi)
        self.mean = float(mean)
        self.std = float(std)
        self.rule = rule
        self._dist = stats.truncnorm(
            (lo - mean) / std, (hi - mean) / std, loc=self.mean, scale=self.std
        )

    def _build_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._span_rule(
            self.rule or QuadratureRule(GAUSS_LEGENDRE, 128, (self.space.lo, self.space.hi))
        )

    def log_pdf(self, h: Any) -> np.ndarray:
        return self._dist.logpdf(np.asarray(h, dtype=float))

    def cdf(self, h: Any) -> np.ndarray:
        return self._dist.cdf(np.asarray(h, dtype=float))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self._dist.rvs(size=size, random_state=rng), dtype=float)

    def describe(self) -> Dict[str, Any]:
        return self._describe_rule(
            {
                "form": "truncated-normal",
                "lo": self.space.lo,
                "hi": self.space.hi,
                "mean": self.mean,
                "std": self.std,
            }
        )


class TabulatedPrior(Prior):
    """
    Piecewise-linear density through user-supplied points (x_i, d_i).

    The table must integrate to 1 within 1e-6; it is not renormalised.
    """

    def __init__(
        self, x: Sequence[float], density: Sequence[float], rule: Optional[QuadratureRule] = None
    ):
        self.x = np.asarray(x, dtype=float)
        self.density = np.asarray(density, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.density.shape or len(self.x) < 2:
            raise InputDomainError("Tabulated prior needs matching x and density arrays")
        if np.any(np.diff(self.x) <= 0):
            raise InputDomainError("Tabulated prior x must be strictly sorted")
        if np.any(self.density < 0):
            raise InputDomainError("Tabulated prior density must be nonnegative")
        total = float(integrate.trapezoid(self.density, self.x))
        if abs(total - 1.0) > TABULATED_INTEGRAL_TOLERANCE:
            raise InputDomainError(f"Tabulated prior integrates to {total!r}, expected 1")
        self.space = ObjectSpace.interval(self.x[0], self.x[-1])
        self.rule = rule
        self._knot_cdf = np.concatenate(
            ([0.0], np.cumsum(0.5 * np.diff(self.x) * (self.density[1:] + self.density[:-1])))
        )

    def _build_quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._span_rule(
            self.rule or QuadratureRule(GAUSS_LEGENDRE, 128, (self.space.lo, self.space.hi))
        )

    def log_pdf(self, h: Any) -> np.ndarray:
        values = np.asarray(h, dtype=float)
        inside = (values >= self.x[0]) & (values <= self.x[-1])
        with np.errstate(divide="ignore"):
            return np.where(inside, np.log(np.interp(values, self.x, self.density)), -np.inf)

    def cdf(self, h: Any) -> np.ndarray:
        values = np.clip(np.asarray(h, dtype=float), self.x[0], self.x[-1])
        i = np.clip(np.searchsorted(self.x, values, side="right") - 1, 0, len(self.x) - 2)
        width = self.x[i + 1] - self.x[i]
        t = values - self.x[i]
        slope = (self.density[i + 1] - self.density[i]) / width
        return self._knot_cdf[i] + self.density[i] * t + 0.5 * slope * t**2

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.uniform(0.0, self._knot_cdf[-1], size=size)
        i = np.clip(np.searchsorted(self._knot_cdf, u, side="right") - 1, 0, len(self.x) - 2)
        width = self.x[i + 1] - self.x[i]
        slope = (self.density[i + 1] - self.density[i]) / width
        rest = u - self._knot_cdf[i]
        d0 = self.density[i]
        root = np.sqrt(np.maximum(d0**2 + 2.0 * slope * rest, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(d0 + root > 0, 2.0 * rest / (d0 + root), 0.0)
        return self.x[i] + np.clip(t, 0.0, width)

    def describe(self) -> Dict[str, Any]:
        return self._describe_rule(
            {"form": "tabulated", "x": self.x.tolist(), "density": self.density.tolist()}
        )
