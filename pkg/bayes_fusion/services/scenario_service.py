"""
Pointwise scenario operations with domain checking.

The density families in ``bayes_fusion.distributions`` are vectorised and
return -inf outside their support. The functions here are the checked,
single-point entry points: they reject features outside J_m and objects
outside I with InputDomainError.
"""

import logging
from typing import Any, Optional, Tuple

import numpy as np

from bayes_fusion.distributions.priors import Prior
from bayes_fusion.distributions.sensors import SensorModel
from bayes_fusion.exceptions import InputDomainError
from bayes_fusion.spaces import ObjectSpace

logger = logging.getLogger(__name__)


def _check_point(
    sensor: SensorModel, a: Any, h: float, space: Optional[ObjectSpace]
) -> np.ndarray:
    features = np.atleast_1d(np.asarray(a, dtype=float))
    if features.shape != (sensor.dims,):
        raise InputDomainError(
            f"Feature vector has shape {features.shape}, sensor expects ({sensor.dims},)"
        )
    if not bool(sensor.space.contains(features)):
        raise InputDomainError(f"Feature {features.tolist()} is outside the sensor feature space")
    if not np.isfinite(h):
        raise InputDomainError(f"Object value {h} is not finite")
    if space is not None and not bool(space.contains(h)):
        raise InputDomainError(f"Object value {h} is outside {space.describe()}")
    return features


def log_density(
    sensor: SensorModel, a: Any, h: float, space: Optional[ObjectSpace] = None
) -> float:
    """
    Log of d_{A_m|H}(a, h).

    Args:
        sensor: Sensor model
        a: Feature vector of length N_m
        h: Object value
        space: Object space to check h against (optional)

    Returns:
        Log density; -inf where the density vanishes

    Raises:
        InputDomainError: If a is outside J_m or h outside I
    """
    features = _check_point(sensor, a, h, space)
    return float(sensor.log_density(features, h))


def density(sensor: SensorModel, a: Any, h: float, space: Optional[ObjectSpace] = None) -> float:
    return float(np.exp(log_density(sensor, a, h, space)))


def sample(
    sensor: SensorModel, h: float, rng: np.random.Generator, space: Optional[ObjectSpace] = None
) -> np.ndarray:
    """Draw one feature vector from d_{A_m|H}(., h)."""
    if space is not None and not bool(space.contains(h)):
        raise InputDomainError(f"Object value {h} is outside {space.describe()}")
    return sensor.sample(np.array([float(h)]), rng)[0]


def sample_prior(prior: Prior, mode: str, rng: np.random.Generator) -> Tuple[float, float]:
    """
    Draw one object value from the proposal and its importance weight.

    Args:
        prior: Prior d_H
        mode: "prior" or "uniform"
        rng: Random stream

    Returns:
        Tuple of (h, d_H(h) / d_{H'}(h))

    Raises:
        UnsupportedConfigurationError: Uniform mode on an unbounded continuous I
    """
    h, weight = prior.proposal_sample(1, mode, rng)
    return float(h[0]), float(weight[0])
