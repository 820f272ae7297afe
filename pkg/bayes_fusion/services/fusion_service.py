"""
Bayes-optimal deterministic fusion rule.

The rule is the posterior mean of H given all features, quantized onto the
decision space K (nearest point of K, ties toward the smaller value). The
posterior mean is evaluated with the prior's fixed quadrature rule and summed
in log space so that hundreds of sensors do not underflow.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Protocol

import numpy as np
from scipy import special, stats

from bayes_fusion.distributions.sensors import DiscreteOutputSensor, PoissonSensor, SensorModel
from bayes_fusion.exceptions import (
    InputDomainError,
    NumericalDegeneracyError,
    UnsupportedConfigurationError,
)
from bayes_fusion.models import Scenario
from bayes_fusion.spaces import CostFunction, DecisionSpace

logger = logging.getLogger(__name__)

DEGENERACY_THRESHOLD = 1e-300
LOG_DEGENERACY_THRESHOLD = math.log(DEGENERACY_THRESHOLD)
ENUMERATION_TAIL = 1e-15
MAX_ENUMERATION_SIZE = 5_000_000
# Rows per posterior pass when the caller names no chunk size; bounds the (rows, nodes) arrays
ROWS_PER_PASS = 8_192


def _as_rows(scenario: Scenario, features: Any) -> np.ndarray:
    rows = np.asarray(features, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[1] != scenario.total_dims:
        raise InputDomainError(
            f"Feature rows must have {scenario.total_dims} columns, got shape {rows.shape}"
        )
    return rows


def log_joint(scenario: Scenario, features: np.ndarray) -> np.ndarray:
    """
    log(quadrature weight x prior x prod_m d_{A_m|H}(a_m, node)) for every row and node.

    Accumulated sensor by sensor, so memory stays (L, K) whatever M is.
    """
    nodes, log_weights = scenario.prior.quadrature()
    accumulated = np.broadcast_to(log_weights, (features.shape[0], len(nodes))).copy()
    for sensor, block in zip(scenario.sensors, scenario.block_slices):
        accumulated += sensor.log_density(features[:, None, block], nodes[None, :])
    return accumulated


def posterior_mean_batch(
    scenario: Scenario, features: Any, chunk_size: Optional[int] = None
) -> np.ndarray:
    """
    Posterior mean E[H | A = a] for each row of ``features``.

    Args:
        scenario: Scenario providing prior quadrature and sensors
        features: Array of shape (L, N) with N the total feature dimension
        chunk_size: Rows evaluated per pass (ROWS_PER_PASS when None)

    Returns:
        Array of shape (L,)

    Raises:
        NumericalDegeneracyError: If the Bayes denominator falls below 1e-300
    """
    rows = _as_rows(scenario, features)
    nodes, _ = scenario.prior.quadrature()
    step = chunk_size or ROWS_PER_PASS
    out = np.empty(len(rows))
    for start in range(0, len(rows), step):
        chunk = rows[start:start + step]
        accumulated = log_joint(scenario, chunk)
        with np.errstate(invalid="ignore", divide="ignore"):
            log_denominator = special.logsumexp(accumulated, axis=1)
        bad = ~np.isfinite(log_denominator) | (log_denominator < LOG_DEGENERACY_THRESHOLD)
        if np.any(bad):
            offending = chunk[np.flatnonzero(bad)[0]]
            logger.error(f"Degenerate posterior denominator at features {offending.tolist()}")
            raise NumericalDegeneracyError(
                f"Posterior denominator below {DEGENERACY_THRESHOLD} at a={offending.tolist()}",
                features=offending,
            )
        posterior = np.exp(accumulated - log_denominator[:, None])
        out[start:start + step] = posterior @ nodes
    return out


def posterior_mean(scenario: Scenario, a: Any) -> float:
    """
    Posterior mean for one joint feature vector, with domain checks per block.

    Raises:
        InputDomainError: If a block lies outside its sensor's feature space
        NumericalDegeneracyError: If the Bayes denominator degenerates
    """
    row = np.asarray(a, dtype=float).reshape(-1)
    if row.shape != (scenario.total_dims,):
        raise InputDomainError(
            f"Joint feature vector needs {scenario.total_dims} components, got {row.shape[0]}"
        )
    for index, (sensor, block) in enumerate(zip(scenario.sensors, scenario.block_slices)):
        if not bool(sensor.space.contains(row[block])):
            raise InputDomainError(
                f"Features {row[block].tolist()} of sensor {index} lie outside its feature space"
            )
    return float(posterior_mean_batch(scenario, row[None, :])[0])


def quantize_array(space: DecisionSpace, x: Any) -> np.ndarray:
    """
    Nearest point of K for each value; ties go to the smaller point.

    Args:
        space: Decision space
        x: Values to quantize

    Returns:
        Array of the same shape with every entry in K
    """
    values = np.asarray(x, dtype=float)
    if space.is_discrete:
        points = space.point_array
        upper = np.clip(np.searchsorted(points, values, side="left"), 0, len(points) - 1)
        lower = np.clip(upper - 1, 0, len(points) - 1)
        take_lower = np.abs(values - points[lower]) <= np.abs(points[upper] - values)
        return np.where(take_lower, points[lower], points[upper])
    if len(space.intervals) == 1:
        return np.clip(values, space.lo, space.hi)
    candidates = np.stack([np.clip(values, lo, hi) for lo, hi in space.intervals])
    # argmin returns the first minimiser, which is the lower interval on ties
    nearest = np.argmin(np.abs(candidates - values), axis=0)
    return np.take_along_axis(candidates, nearest[None, ...], axis=0)[0]


def quantize(space: DecisionSpace, x: float) -> float:
    return float(quantize_array(space, np.asarray(float(x))))


class Rule(Protocol):
    """Anything that maps joint feature rows to decisions in K."""

    decision_space: DecisionSpace
    label: str

    def fuse_batch(self, features: Any) -> np.ndarray:
        ...

    def soft_batch(self, features: Any) -> np.ndarray:
        ...


class FusionRule:
    """
    Posterior mean composed with the quantizer onto the scenario's decision space.

    Instances are immutable and safe to call from any number of worker threads.
    """

    label = "centralized"

    def __init__(self, scenario: Scenario, chunk_size: Optional[int] = None):
        self.scenario = scenario
        self.decision_space = scenario.decision_space
        self.chunk_size = chunk_size

    def soft(self, a: Any) -> float:
        return posterior_mean(self.scenario, a)

    def fuse(self, a: Any) -> float:
        return quantize(self.decision_space, self.soft(a))

    def soft_batch(self, features: Any) -> np.ndarray:
        return posterior_mean_batch(self.scenario, features, self.chunk_size)

    def fuse_batch(self, features: Any) -> np.ndarray:
        return quantize_array(self.decision_space, self.soft_batch(features))

    def __call__(self, features: Any) -> np.ndarray:
        return self.fuse_batch(features)


@dataclass(frozen=True, eq=False)
class JointEnumeration:
    """
    Every joint feature vector of a count-valued scenario with its likelihoods.

    ``likelihood[p, i]`` is prod_m P(A_m = features[p, m] | H = points[i]).
    """

    features: np.ndarray
    likelihood: np.ndarray
    points: np.ndarray
    prior_weights: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        """Marginal P(A = features[p])."""
        return self.likelihood @ self.prior_weights

    @property
    def truncated_mass(self) -> float:
        return float(1.0 - self.probabilities.sum())


def _count_support(sensor: SensorModel, points: np.ndarray, tail: float) -> np.ndarray:
    if sensor.dims != 1:
        raise UnsupportedConfigurationError("Enumeration supports scalar count sensors only")
    if isinstance(sensor, DiscreteOutputSensor):
        return sensor.levels
    if isinstance(sensor, PoissonSensor):
        top = float(np.max(stats.poisson.isf(tail, sensor.rate(points))))
        return np.arange(0.0, top + 1.0)
    raise UnsupportedConfigurationError(
        f"Cannot enumerate the feature space of a {sensor.family} sensor"
    )


def enumerate_joint(scenario: Scenario, tail: float = ENUMERATION_TAIL) -> JointEnumeration:
    """
    Enumerate the joint feature space of a discrete scenario with count-valued sensors.

    Poisson supports are truncated where the upper tail drops below ``tail``
    at every object point.

    Raises:
        UnsupportedConfigurationError: Continuous I, non-count sensors, or an
            enumeration too large to hold in memory
    """
    if not scenario.object_space.is_discrete:
        raise UnsupportedConfigurationError("Enumeration needs a discrete object space")
    points = scenario.object_space.point_array
    supports = [_count_support(sensor, points, tail) for sensor in scenario.sensors]
    size = int(np.prod([len(support) for support in supports]))
    if size > MAX_ENUMERATION_SIZE:
        raise UnsupportedConfigurationError(f"Joint feature space has {size} points, too many")
    features = np.array(list(itertools.product(*supports)), dtype=float)
    log_likelihood = np.zeros((size, len(points)))
    for m, sensor in enumerate(scenario.sensors):
        log_likelihood += sensor.log_density(features[:, None, m:m + 1], points[None, :])
    weights = np.exp(scenario.prior.log_pdf(points))
    logger.info(f"Enumerated {size} joint feature vectors for scenario {scenario.name}")
    return JointEnumeration(features, np.exp(log_likelihood), points, weights)


def enumerate_pair_risks(
    table: JointEnumeration, decisions: np.ndarray, cost: CostFunction
) -> np.ndarray:
    """Risk contribution of each enumerated feature vector under the given decisions."""
    losses = cost(np.asarray(decisions, dtype=float)[:, None] - table.points[None, :])
    return np.sum(table.likelihood * losses * table.prior_weights[None, :], axis=1)


def enumerate_risk(
    scenario: Scenario,
    decisions: Optional[np.ndarray] = None,
    cost: Optional[CostFunction] = None,
    table: Optional[JointEnumeration] = None,
) -> float:
    """
    Exact Bayes risk by enumeration.

    Args:
        scenario: Discrete scenario with count-valued sensors
        decisions: Decision per enumerated feature vector (the fusion rule's when None)
        cost: Cost function (the scenario's when None)
        table: Precomputed enumeration

    Returns:
        Bayes risk
    """
    table = table or enumerate_joint(scenario)
    if decisions is None:
        decisions = FusionRule(scenario).fuse_batch(table.features)
    return float(np.sum(enumerate_pair_risks(table, decisions, cost or scenario.cost)))
