"""
Sensor density families d_{A_m|H}(a, h).

All densities broadcast: ``log_density(a, h)`` takes features with the sensor
dimension on the last axis, ``a.shape == (..., N)``, and object values ``h`` whose
shape broadcasts against ``a.shape[:-1]``. The same call serves the fusion rule
(L samples against K quadrature nodes, ``a[:, None, :]`` with ``h[None, :]``) and
paired evaluation (sample l at its own h_l).

Densities return ``-inf`` outside their support instead of raising; domain
checks with errors live in ``services.scenario_service``.
"""

import logging
import math
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from bayes_fusion.distributions.params import (
    Affine,
    Constant,
    ParamFn,
    ParamLike,
    Power,
    Table,
    as_param,
)
from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.spaces import FeatureDomain, FeatureSpace

logger = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MIXTURE_WEIGHT_TOLERANCE = 1e-12
TABLE_ROW_TOLERANCE = 1e-9
MAX_REJECTION_ROUNDS = 1000


class SensorModel:
    """Conditional density of one sensor's features given the object value."""

    space: FeatureSpace
    family: str = "sensor"

    @property
    def dims(self) -> int:
        return self.space.dims

    @property
    def is_scalar(self) -> bool:
        return self.space.dims == 1

    @property
    def is_discrete(self) -> bool:
        return self.space.is_discrete

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        raise NotImplementedError

    def density(self, a: Any, h: Any) -> np.ndarray:
        return np.exp(self.log_density(a, h))

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one feature vector per entry of the 1-D array h; returns (len(h), N)."""
        raise NotImplementedError

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        """P(A <= x | H = h) for scalar sensors."""
        raise NotImplementedError(f"{self.family} sensor has no distribution function")

    @property
    def has_cdf(self) -> bool:
        return self.is_scalar and type(self).cdf is not SensorModel.cdf

    def describe(self) -> Dict[str, Any]:
        raise NotImplementedError

    @staticmethod
    def _split(a: Any) -> np.ndarray:
        return np.asarray(a, dtype=float)


class GaussianSensor(SensorModel):
    """
    Gaussian features N(mean(h), V(h) V(h)^T) with V the lower-triangular factor.

    Args:
        mean: Parameter of shape (N,)
        factor: Parameter of shape (N, N), lower triangular with a positive diagonal
    """

    family = "gaussian"

    def __init__(self, mean: ParamLike, factor: ParamLike):
        self.mean = as_param(mean)
        self.factor = as_param(factor)
        if len(self.mean.shape) != 1:
            raise InputDomainError(f"Gaussian mean must be a vector, got shape {self.mean.shape}")
        n = self.mean.shape[0]
        if self.factor.shape != (n, n):
            raise InputDomainError(
                f"Gaussian factor must have shape {(n, n)}, got {self.factor.shape}"
            )
        self.space = FeatureSpace(dims=n, domain=FeatureDomain.REAL)
        self._inverse: Optional[np.ndarray] = None
        self._log_det = 0.0
        if self.factor.is_constant:
            factor_value = np.asarray(self.factor(0.0), dtype=float)
            if np.any(np.triu(factor_value, 1)):
                raise InputDomainError("Gaussian factor must be lower triangular")
            diagonal = np.diag(factor_value)
            if np.any(diagonal <= 0):
                raise InputDomainError(
                    f"Gaussian factor needs a strictly positive diagonal, got {diagonal}"
                )
            self._inverse = np.linalg.inv(factor_value)
            self._log_det = float(np.sum(np.log(diagonal)))

    @classmethod
    def scalar(
        cls,
        mean: ParamLike = 0.0,
        variance: Optional[float] = None,
        std: Optional[ParamLike] = None,
    ) -> "GaussianSensor":
        """One-dimensional Gaussian; give either a constant variance or a std parameter."""
        if (variance is None) == (std is None):
            raise InputDomainError("Give exactly one of variance or std")
        mean_fn = as_param(mean)
        if mean_fn.shape == ():
            mean_fn = _lift_vector(mean_fn)
        if variance is not None:
            if not variance > 0:
                raise InputDomainError(f"Gaussian variance must be positive, got {variance}")
            factor: ParamFn = Constant(np.array([[math.sqrt(variance)]]))
        else:
            factor = _lift_matrix(as_param(std))  # type: ignore[arg-type]
        return cls(mean_fn, factor)

    @classmethod
    def linear(cls, slope: float, variance: float, offset: float = 0.0) -> "GaussianSensor":
        """Scalar sensor with mean offset + slope*h and constant variance."""
        return cls.scalar(Affine([offset], [slope]), variance=variance)

    @classmethod
    def from_covariance(
        cls, mean: ParamLike, covariance: Sequence[Sequence[float]]
    ) -> "GaussianSensor":
        matrix = np.asarray(covariance, dtype=float)
        try:
            factor = np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError as e:
            raise InputDomainError(f"Covariance is not positive definite: {e}") from e
        return cls(mean, Constant(factor))

    def linear_coefficients(self) -> Optional[Tuple[float, float, float]]:
        """(offset, slope, variance) for a scalar sensor with affine mean and constant variance."""
        if not self.is_scalar or self._inverse is None:
            return None
        if isinstance(self.mean, Affine):
            offset, slope = float(self.mean.offset[0]), float(self.mean.slope[0])
        elif isinstance(self.mean, Constant):
            offset, slope = float(self.mean.value[0]), 0.0
        else:
            return None
        return offset, slope, float(np.exp(2.0 * self._log_det))

    def _whiten(self, diff: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Return (z, log|det V|) with V z = diff."""
        if self._inverse is not None:
            if self.is_scalar:
                return diff * self._inverse[0, 0], np.asarray(self._log_det)
            return np.einsum("ij,...j->...i", self._inverse, diff), np.asarray(self._log_det)
        factor = self.factor(h)
        diagonal = np.diagonal(factor, axis1=-2, axis2=-1)
        if np.any(diagonal <= 0):
            raise InputDomainError(
                "Gaussian factor diagonal must stay positive over the object space"
            )
        log_det = np.sum(np.log(diagonal), axis=-1)
        if self.is_scalar:
            with np.errstate(invalid="ignore"):
                z = diff / factor[..., 0]
            # an infinite scale makes the density vanish at every finite a
            z = np.where(np.isinf(factor[..., 0]), 0.0, z)
            return z, log_det
        batch = np.broadcast_shapes(diff.shape[:-1], factor.shape[:-2])
        z = np.linalg.solve(
            np.broadcast_to(factor, batch + factor.shape[-2:]),
            np.broadcast_to(diff, batch + diff.shape[-1:])[..., None],
        )[..., 0]
        return z, log_det

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        features = self._split(a)
        hv = np.asarray(h, dtype=float)
        diff = features - self.mean(hv)
        z, log_det = self._whiten(diff, hv)
        return -0.5 * np.sum(z**2, axis=-1) - log_det - self.dims * LOG_SQRT_2PI

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        hv = np.asarray(h, dtype=float)
        noise = rng.standard_normal((len(hv), self.dims))
        if self._inverse is not None:
            colored = noise @ np.asarray(self.factor(0.0)).T
        else:
            colored = np.einsum("lij,lj->li", self.factor(hv), noise)
        return self.mean(hv) + colored

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        if not self.is_scalar:
            raise NotImplementedError("Multivariate Gaussian has no scalar distribution function")
        hv = np.asarray(h, dtype=float)
        loc = self.mean(hv)[..., 0]
        scale = self.factor(hv)[..., 0, 0]
        return stats.norm.cdf(np.asarray(x, dtype=float), loc=loc, scale=scale)

    def describe(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "mean": self.mean.describe(),
            "factor": self.factor.describe(),
        }


def _lift_vector(param: ParamFn) -> ParamFn:
    """Give a scalar parameter a trailing axis of length 1."""
    if isinstance(param, Constant):
        return Constant(param.value.reshape(1))
    if isinstance(param, Affine):
        return Affine(param.offset.reshape(1), param.slope.reshape(1))
    if isinstance(param, Power):
        return Power(param.scale.reshape(1), param.exponent)
    if isinstance(param, Table):
        return Table(param.points, param.values.reshape(-1, 1))
    raise InputDomainError(f"Cannot use {type(param).__name__} as a scalar Gaussian mean")


def _lift_matrix(param: ParamFn) -> ParamFn:
    """Turn a scalar std parameter into a 1x1 factor."""
    if param.shape == (1, 1):
        return param
    if isinstance(param, Constant):
        return Constant(param.value.reshape(1, 1))
    if isinstance(param, Affine):
        return Affine(param.offset.reshape(1, 1), param.slope.reshape(1, 1))
    if isinstance(param, Power):
        return Power(param.scale.reshape(1, 1), param.exponent)
    if isinstance(param, Table):
        return Table(param.points, param.values.reshape(-1, 1, 1))
    raise InputDomainError(f"Cannot use {type(param).__name__} as a scalar Gaussian std")


class ExponentialSensor(SensorModel):
    """Exponential feature with rate(h); the default rate is h itself."""

    family = "exponential"

    def __init__(self, rate: Optional[ParamLike] = None):
        self.rate = as_param(rate) if rate is not None else Affine(0.0, 1.0)
        if self.rate.shape != ():
            raise InputDomainError("Exponential rate must be a scalar parameter")
        self.space = FeatureSpace(dims=1, domain=FeatureDomain.HALF_LINE, lo=0.0)

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        x = self._split(a)[..., 0]
        rate = self.rate(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.log(rate) - rate * x
        return np.where((x >= 0) & (rate > 0), value, -np.inf)

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        rate = self.rate(np.asarray(h, dtype=float))
        return (rng.standard_exponential(len(rate)) / rate)[:, None]

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        values = np.asarray(x, dtype=float)
        return np.where(values > 0, -np.expm1(-self.rate(h) * np.maximum(values, 0.0)), 0.0)

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family, "rate": self.rate.describe()}


class PoissonSensor(SensorModel):
    """Poisson count with rate(h); the default rate is h itself."""

    family = "poisson"

    def __init__(self, rate: Optional[ParamLike] = None):
        self.rate = as_param(rate) if rate is not None else Affine(0.0, 1.0)
        if self.rate.shape != ():
            raise InputDomainError("Poisson rate must be a scalar parameter")
        self.space = FeatureSpace(dims=1, domain=FeatureDomain.NONNEGATIVE_INTEGERS, lo=0.0)

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        return stats.poisson.logpmf(self._split(a)[..., 0], self.rate(h))

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return rng.poisson(self.rate(np.asarray(h, dtype=float))).astype(float)[:, None]

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        return stats.poisson.cdf(np.asarray(x, dtype=float), self.rate(h))

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family, "rate": self.rate.describe()}


class UniformSensor(SensorModel):
    """Uniform feature on [lo(h), hi(h)]."""

    family = "uniform"

    def __init__(self, lo: ParamLike, hi: ParamLike, space: Optional[FeatureSpace] = None):
        self.lo = as_param(lo)
        self.hi = as_param(hi)
        if self.lo.shape != () or self.hi.shape != ():
            raise InputDomainError("Uniform bounds must be scalar parameters")
        self.space = space or FeatureSpace(dims=1, domain=FeatureDomain.REAL)

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        x = self._split(a)[..., 0]
        lo, hi = self.lo(h), self.hi(h)
        width = hi - lo
        with np.errstate(divide="ignore", invalid="ignore"):
            value = -np.log(width)
        return np.where((x >= lo) & (x <= hi) & (width > 0), value, -np.inf)

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        hv = np.asarray(h, dtype=float)
        lo, hi = self.lo(hv), self.hi(hv)
        return (lo + (hi - lo) * rng.uniform(size=len(hv)))[:, None]

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        lo, hi = self.lo(h), self.hi(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (np.asarray(x, dtype=float) - lo) / (hi - lo)
        return np.clip(np.nan_to_num(ratio, nan=1.0), 0.0, 1.0)

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family, "lo": self.lo.describe(), "hi": self.hi.describe()}


class MixtureSensor(SensorModel):
    """Finite mixture sum_k w_k d_k(a, h) with explicit weights summing to 1."""

    family = "mixture"

    def __init__(
        self,
        components: Sequence[SensorModel],
        weights: Sequence[float],
        space: Optional[FeatureSpace] = None,
    ):
        if not components:
            raise InputDomainError("Mixture needs at least one component")
        self.components = tuple(components)
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (len(self.components),):
            raise InputDomainError("Mixture needs one weight per component")
        if np.any(self.weights < 0):
            raise InputDomainError("Mixture weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > MIXTURE_WEIGHT_TOLERANCE:
            raise InputDomainError(
                f"Mixture weights must sum to 1 without renormalisation, got {self.weights.sum()!r}"
            )
        dims = {component.dims for component in self.components}
        if len(dims) != 1:
            raise InputDomainError(f"Mixture components disagree on dimension: {sorted(dims)}")
        self.space = space or self.components[0].space

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        with np.errstate(divide="ignore"):
            log_weights = np.log(self.weights)
        terms = [lw + c.log_density(a, h) for lw, c in zip(log_weights, self.components)]
        return special.logsumexp(np.stack(np.broadcast_arrays(*terms)), axis=0)

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        hv = np.asarray(h, dtype=float)
        choice = rng.choice(len(self.components), size=len(hv), p=self.weights)
        out = np.empty((len(hv), self.dims))
        for k, component in enumerate(self.components):
            mask = choice == k
            if np.any(mask):
                out[mask] = component.sample(hv[mask], rng)
        return out

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        return sum(w * c.cdf(x, h) for w, c in zip(self.weights, self.components))

    @property
    def has_cdf(self) -> bool:
        return all(component.has_cdf for component in self.components)

    def describe(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "weights": self.weights.tolist(),
            "components": [component.describe() for component in self.components],
        }



class RestrictedSensor(SensorModel):
    """
    A continuous scalar sensor conditioned on its feature falling in [lo, hi].

    The density is the inner density divided by its mass on [lo, hi], and -inf
    outside. Sampling redraws the rows that land outside.
    """

    family = "restricted"

    def __init__(self, inner: SensorModel, lo: float, hi: float):
        if not inner.has_cdf or inner.space.is_discrete:
            raise InputDomainError(
                f"Only continuous scalar sensors with a distribution function can be "
                f"restricted, got {inner.family}"
            )
        if not lo < hi:
            raise InputDomainError(f"Feature range needs lo < hi, got [{lo}, {hi}]")
        self.inner = inner
        self.lo = float(lo)
        self.hi = float(hi)
        self.space = FeatureSpace(dims=1, domain=FeatureDomain.INTERVAL, lo=self.lo, hi=self.hi)

    def mass(self, h: Any) -> np.ndarray:
        """P(lo <= A <= hi | H = h) under the inner sensor."""
        return self.inner.cdf(self.hi, h) - self.inner.cdf(self.lo, h)

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        x = self._split(a)[..., 0]
        mass = self.mass(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = self.inner.log_density(a, h) - np.log(mass)
        return np.where((x >= self.lo) & (x <= self.hi) & (mass > 0), value, -np.inf)

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        hv = np.asarray(h, dtype=float)
        out = self.inner.sample(hv, rng)
        pending = np.flatnonzero(~self.space.contains(out))
        rounds = 0
        while len(pending):
            if rounds == MAX_REJECTION_ROUNDS:
                raise UnsupportedConfigurationError(
                    f"{len(pending)} features still outside [{self.lo}, {self.hi}] after "
                    f"{rounds} redraws, e.g. at h={hv[pending[0]]!r}"
                )
            out[pending] = self.inner.sample(hv[pending], rng)
            pending = pending[~self.space.contains(out[pending])]
            rounds += 1
        return out

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        clipped = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (self.inner.cdf(clipped, h) - self.inner.cdf(self.lo, h)) / self.mass(h)
        return np.clip(np.nan_to_num(ratio, nan=0.0), 0.0, 1.0)

    def describe(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "range": [self.lo, self.hi],
            "sensor": self.inner.describe(),
        }


class DiscreteOutputSensor(SensorModel):
    """
    Finite-valued feature with a tabulated distribution per object point.

    ``table[i, j]`` is P(A = levels[j] | H = object_points[i]). Used for the
    derived stage-2 sensors of a distributed network with a discrete K*.
    """

    family = "discrete-output"

    def __init__(
        self,
        levels: Sequence[float],
        object_points: Sequence[float],
        table: Any,
    ):
        self.levels = np.asarray(levels, dtype=float)
        self.object_points = np.asarray(object_points, dtype=float)
        self.table = np.asarray(table, dtype=float)
        if self.table.shape != (len(self.object_points), len(self.levels)):
            raise InputDomainError(
                f"Table shape {self.table.shape} does not match "
                f"{len(self.object_points)} objects x {len(self.levels)} levels"
            )
        if np.any(self.table < 0):
            raise InputDomainError("Output probabilities must be nonnegative")
        row_sums = self.table.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > TABLE_ROW_TOLERANCE):
            raise InputDomainError(f"Output probability rows must sum to 1, got {row_sums}")
        self.space = FeatureSpace(
            dims=1, domain=FeatureDomain.FINITE, levels=tuple(self.levels.tolist())
        )
        self._cumulative = np.cumsum(self.table, axis=1)

    def _object_index(self, h: Any) -> np.ndarray:
        hv = np.asarray(h, dtype=float)
        index = np.clip(np.searchsorted(self.object_points, hv), 0, len(self.object_points) - 1)
        if not np.all(self.object_points[index] == hv):
            raise InputDomainError("Discrete-output sensor evaluated off its object points")
        return index

    def log_density(self, a: Any, h: Any) -> np.ndarray:
        x = self._split(a)[..., 0]
        level = np.clip(np.searchsorted(self.levels, x), 0, len(self.levels) - 1)
        row = self._object_index(h)
        with np.errstate(divide="ignore"):
            value = np.log(self.table[row, level])
        return np.where(self.levels[level] == x, value, -np.inf)

    def sample(self, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        rows = self._cumulative[self._object_index(h)]
        u = rng.uniform(size=len(rows))
        index = np.minimum((u[:, None] >= rows).sum(axis=1), len(self.levels) - 1)
        return self.levels[index][:, None]

    def cdf(self, x: Any, h: Any) -> np.ndarray:
        rows = self._cumulative[self._object_index(h)]
        count = np.searchsorted(self.levels, np.asarray(x, dtype=float), side="right")
        padded = np.concatenate([np.zeros(rows.shape[:-1] + (1,)), rows], axis=-1)
        return np.take_along_axis(padded, np.asarray(count)[..., None], axis=-1)[..., 0]

    def describe(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "levels": self.levels.tolist(),
            "object_points": self.object_points.tolist(),
            "table": self.table.tolist(),
        }


def _within(sensor: SensorModel, support: Optional[Tuple[float, float]]) -> SensorModel:
    return sensor if support is None else RestrictedSensor(sensor, *support)


def exponential_uniform_mixture(support: Optional[Tuple[float, float]] = None) -> SensorModel:
    """
    1/2 * exponential(rate h) + 1/2 * uniform[0, h] on the half-line.

    With ``support`` the mixture is conditioned on its feature lying in that range.
    """
    half_line = FeatureSpace(dims=1, domain=FeatureDomain.HALF_LINE, lo=0.0)
    mixture = MixtureSensor(
        [ExponentialSensor(Affine(0.0, 1.0)), UniformSensor(0.0, Affine(0.0, 1.0), half_line)],
        [0.5, 0.5],
        space=half_line,
    )
    return _within(mixture, support)


def narrow_wide_gaussian_mixture(support: Optional[Tuple[float, float]] = None) -> SensorModel:
    """1/2 * N(h, 0.1^2) + 1/2 * N(0.7, (3/h)^2), optionally conditioned on ``support``."""
    mixture = MixtureSensor(
        [
            GaussianSensor.scalar(Affine(0.0, 1.0), variance=0.01),
            GaussianSensor.scalar(0.7, std=Power(3.0, -1.0)),
        ],
        [0.5, 0.5],
    )
    return _within(mixture, support)
