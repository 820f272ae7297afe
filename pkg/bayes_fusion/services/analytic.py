"""
Closed-form oracles for cross-validating the generic engine.

Nothing here calls the fusion or Monte Carlo services: every formula is an
independent implementation so that an agreement between the two is evidence
rather than an echo.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import special

from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.models import GridSpec, PerformanceGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianScenarioParams:
    """Standard normal H observed by an even number M >= 2 of sensors A_m ~ N(u H, v)."""

    u: float = 1.0
    v: float = 1.0
    M: int = 2

    def __post_init__(self) -> None:
        if not self.v > 0:
            raise InputDomainError(f"Variance v must be positive, got {self.v}")
        if self.M < 2 or self.M % 2:
            raise InputDomainError(f"M must be an even number of at least 2, got {self.M}")
        if self.u == 0:
            raise InputDomainError("Mean slope u must be nonzero")

    @property
    def signal(self) -> float:
        """M u^2, the total signal power."""
        return self.M * self.u**2


@dataclass(frozen=True)
class ExponentialScenarioParams:
    """Exponential(1) H observed by M sensors A_m ~ exponential(rate H)."""

    M: int = 1

    def __post_init__(self) -> None:
        if self.M < 1:
            raise InputDomainError(f"M must be at least 1, got {self.M}")


@dataclass(frozen=True)
class PoissonRates:
    """Error rates of the deterministic rule 'decide 1 iff A + B <= 2'."""

    false_positive: float
    miss: float
    correct_low: float
    correct_high: float
    threshold: int = 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "false_positive": self.false_positive,
            "miss": self.miss,
            "correct_low": self.correct_low,
            "correct_high": self.correct_high,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class PbpoGaussResult:
    """Two-stage network on the Gaussian scenario with u = v = 1 and K* = K = R."""

    M: int
    local_coefficient: float
    system_coefficient: float
    risk: float

    def local(self, group_features: Any) -> np.ndarray:
        """A* = sum of the group's features / (M/2 + 1)."""
        return self.local_coefficient * np.sum(np.asarray(group_features, dtype=float), axis=-1)

    def system(self, a_star: Any, b_star: Any) -> np.ndarray:
        return self.system_coefficient * (np.asarray(a_star) + np.asarray(b_star))

    def compose(self, features: Any) -> np.ndarray:
        rows = np.asarray(features, dtype=float)
        half = self.M // 2
        return self.system(self.local(rows[..., :half]), self.local(rows[..., half:]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "local_coefficient": self.local_coefficient,
            "system_coefficient": self.system_coefficient,
            "risk": self.risk,
        }


# Gaussian scenario

def _feature_sum(params_m: int, a: Any) -> np.ndarray:
    values = np.asarray(a, dtype=float)
    if values.shape[-1] != params_m:
        raise InputDomainError(f"Expected {params_m} features, got {values.shape[-1]}")
    return np.sum(values, axis=-1)


def gauss_fusion(params: GaussianScenarioParams, a: Any) -> Any:
    """Optimal rule u * sum(a) / (M u^2 + v)."""
    return params.u * _feature_sum(params.M, a) / (params.signal + params.v)


def gauss_performance(params: GaussianScenarioParams, c: Any, h: Any) -> Any:
    """Density of C = gauss_fusion(A) given H = h."""
    c = np.asarray(c, dtype=float)
    h = np.asarray(h, dtype=float)
    mu2 = params.signal
    scale = (mu2 + params.v) / (abs(params.u) * math.sqrt(2.0 * math.pi * params.M * params.v))
    exponent = (mu2 * (c - h) + c * params.v) ** 2 / (2.0 * mu2 * params.v)
    return scale * np.exp(-exponent)


def gauss_risk(params: GaussianScenarioParams) -> float:
    """E[(C - H)^2] = v / (M u^2 + v)."""
    return params.v / (params.signal + params.v)


def gauss_performance_peak(params: GaussianScenarioParams, h: Any) -> Any:
    """Location of the performance maximum over c at fixed h."""
    return params.signal * np.asarray(h, dtype=float) / (params.signal + params.v)


def sample_mean_risk(params: GaussianScenarioParams) -> float:
    """E[(C - H)^2] of the sample-mean estimator C = sum(a) / (M u)."""
    return params.v / params.signal


def linear_rule_risk(
    coefficients: Any, slopes: Any, variances: Any, prior_variance: float = 1.0
) -> float:
    """
    Squared-error risk of C = sum_m alpha_m A_m when A_m ~ N(u_m H, v_m) and Var(H) is given.

    Equals (sum alpha u - 1)^2 Var(H) + sum alpha^2 v.
    """
    alpha = np.asarray(coefficients, dtype=float)
    u = np.asarray(slopes, dtype=float)
    v = np.asarray(variances, dtype=float)
    bias = float(np.dot(alpha, u)) - 1.0
    return bias**2 * prior_variance + float(np.dot(alpha**2, v))


def pbpo_gauss(params: GaussianScenarioParams) -> PbpoGaussResult:
    """
    Local and system rules of the two-stage network with continuous K* and K.

    Raises:
        UnsupportedConfigurationError: If u or v differs from 1
    """
    if params.u != 1.0 or params.v != 1.0:
        raise UnsupportedConfigurationError("The two-stage closed form is stated for u = v = 1")
    m = params.M
    local = 1.0 / (m / 2 + 1)
    system = (m + 2) / (2.0 * m + 2.0)
    risk = linear_rule_risk(np.full(m, local * system), np.ones(m), np.ones(m))
    return PbpoGaussResult(M=m, local_coefficient=local, system_coefficient=system, risk=risk)


# Exponential scenario

def expo_fusion(params: ExponentialScenarioParams, a: Any) -> Any:
    """Optimal rule (M + 1) / (sum(a) + 1)."""
    values = np.asarray(a, dtype=float)
    if np.any(values < 0):
        raise InputDomainError("Exponential features must be nonnegative")
    return (params.M + 1) / (_feature_sum(params.M, values) + 1.0)


def expo_performance(params: ExponentialScenarioParams, c: Any, h: Any) -> Any:
    """
    Density of C = expo_fusion(A) given H = h; identically zero for c > M + 1.

    Raises:
        InputDomainError: If any c <= 0 or h < 0
    """
    c = np.asarray(c, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(c <= 0):
        raise InputDomainError("Exponential performance is defined for c > 0")
    if np.any(h < 0):
        raise InputDomainError("Exponential performance is defined for h >= 0")
    m = params.M
    s = (m + 1) / c - 1.0
    inside = s >= 0
    s_safe = np.where(inside, s, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        # Gamma(M, rate h) density of sum(A) at s, times |ds/dc| = (M + 1) / c^2
        log_density = (
            m * np.log(h)
            - h * s_safe
            - special.gammaln(m)
            + math.log(m + 1)
            - 2.0 * np.log(c)
        )
        if m > 1:
            log_density = log_density + (m - 1) * np.log(s_safe)
    return np.where(inside, np.exp(log_density), 0.0)


def expo_risk(params: ExponentialScenarioParams) -> float:
    """E[(C - H)^2] = 2 / (M + 2)."""
    return 2.0 / (params.M + 2)


# Poisson binary example

def _poisson_pmf(k: int, rate: float) -> float:
    return math.exp(-rate) * rate**k / math.factorial(k)


def poisson_binary_rates(threshold: int = 2) -> PoissonRates:
    """
    Error rates of the rule 'decide 1 iff A + B <= threshold' for H in {1, 2}.

    A and B are independent Poisson(h) counts. Sums P(A = a) P(B = b) over the
    pairs with a + b <= threshold. The values are the conditional rates
    P(C = 2 | H = 1) (false positive) and P(C = 1 | H = 2) (miss); some
    write-ups label them the other way round, P(H = 1 | C = 2) and
    P(H = 2 | C = 1), but the enumerated quantities are these.
    """

    def low_decision_mass(h: float) -> float:
        return sum(
            _poisson_pmf(a, h) * _poisson_pmf(b, h)
            for a in range(threshold + 1)
            for b in range(threshold + 1 - a)
        )

    low_given_1 = low_decision_mass(1.0)
    low_given_2 = low_decision_mass(2.0)
    return PoissonRates(
        false_positive=1.0 - low_given_1,
        miss=low_given_2,
        correct_low=low_given_1,
        correct_high=1.0 - low_given_2,
        threshold=threshold,
    )


# Tabulation for grid comparisons

def tabulate_performance(
    density: Callable[[np.ndarray, np.ndarray], np.ndarray],
    decision_range: Tuple[float, float],
    object_range: Tuple[float, float],
    spec: Optional[GridSpec] = None,
) -> PerformanceGrid:
    """Evaluate a closed-form performance density at the centres of a grid."""
    spec = spec or GridSpec()
    decision_edges = np.linspace(*decision_range, spec.decision_bins + 1)
    object_edges = np.linspace(*object_range, spec.object_bins + 1)
    decision_centers = 0.5 * (decision_edges[:-1] + decision_edges[1:])
    object_centers = 0.5 * (object_edges[:-1] + object_edges[1:])
    values = density(decision_centers[None, :], object_centers[:, None])
    rows = len(object_centers)
    return PerformanceGrid(
        decision_centers=decision_centers,
        decision_widths=np.diff(decision_edges),
        object_centers=object_centers,
        values=np.asarray(values, dtype=float),
        counts=np.zeros(rows, dtype=np.int64),
        effective_counts=np.zeros(rows),
        empty_rows=np.zeros(rows, dtype=bool),
        decision_edges=decision_edges,
        object_edges=object_edges,
    )
