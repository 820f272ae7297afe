"""
Unit tests for priors, sensor families, parameter functions and quadrature.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from bayes_fusion.distributions import (
    Affine,
    DiscreteOutputSensor,
    DiscretePrior,
    ExponentialPrior,
    ExponentialSensor,
    GaussianSensor,
    MixtureSensor,
    PoissonSensor,
    Power,
    QuadratureRule,
    RestrictedSensor,
    StandardNormalPrior,
    Table,
    TabulatedPrior,
    TruncatedNormalPrior,
    UniformSensor,
    exponential_uniform_mixture,
    narrow_wide_gaussian_mixture,
)
from bayes_fusion.distributions.quadrature import (
    LOG_TRAPEZOID,
    TRAPEZOID,
    gauss_hermite,
    log_trapezoid,
    log_trapezoid_size,
    trapezoid,
)
from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError


def _moments(prior, power: int) -> float:
    nodes, log_weights = prior.quadrature()
    return float(np.sum(np.exp(log_weights) * nodes**power))


@pytest.mark.unit
class TestQuadrature:
    """Tests for the fixed quadrature rules."""

    def test_hermite_weights_sum_to_one(self) -> None:
        """Test that Gauss-Hermite weights are a probability vector."""
        _, weights = gauss_hermite(64)

        assert weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_trapezoid_needs_two_nodes(self) -> None:
        """Test that a one-node trapezoid rule is rejected."""
        with pytest.raises(InputDomainError):
            trapezoid(0.0, 1.0, 1)

    def test_rule_needs_span(self) -> None:
        """Test that span-based rules require a span."""
        with pytest.raises(InputDomainError):
            QuadratureRule(TRAPEZOID, 10)

    def test_unknown_kind(self) -> None:
        """Test that unknown rule kinds are rejected."""
        with pytest.raises(InputDomainError):
            QuadratureRule("simpson", 10, (0.0, 1.0))

    def test_log_trapezoid_integrates_exponential(self) -> None:
        """Test that log-spaced nodes integrate e^{-h} over the half-line."""
        n = log_trapezoid_size(1e-20, 750.0, 0.1)
        nodes, weights = log_trapezoid(1e-20, 750.0, n)

        assert nodes[0] == pytest.approx(1e-20)
        assert nodes[-1] == pytest.approx(750.0)
        assert np.sum(weights * np.exp(-nodes)) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(weights * nodes * np.exp(-nodes)) == pytest.approx(1.0, abs=1e-12)

    def test_log_trapezoid_resolves_small_scales(self) -> None:
        """Test a gamma density concentrated near 1e-5 on the same grid."""
        nodes, weights = log_trapezoid(1e-20, 750.0, log_trapezoid_size(1e-20, 750.0, 0.1))
        rate = 40001.0
        density = rate**2 * nodes * np.exp(-rate * nodes)

        assert np.sum(weights * density) == pytest.approx(1.0, abs=1e-10)
        assert np.sum(weights * nodes * density) == pytest.approx(2.0 / rate, rel=1e-10)

    def test_knee_grid_turns_uniform(self) -> None:
        """Test that a knee keeps the end points and integrates a constant exactly."""
        n = log_trapezoid_size(1e-12, 4.0, 0.2, knee=0.05)
        nodes, weights = log_trapezoid(1e-12, 4.0, n, knee=0.05)

        assert nodes[0] == pytest.approx(1e-12, rel=1e-9)
        assert nodes[-1] == pytest.approx(4.0, rel=1e-12)
        assert np.sum(weights) == pytest.approx(4.0, abs=1e-9)
        assert np.max(np.diff(nodes)) <= 0.05 * 0.2 + 1e-12

    def test_log_trapezoid_needs_positive_span(self) -> None:
        """Test that a log-spaced rule refuses a span touching zero."""
        with pytest.raises(InputDomainError):
            log_trapezoid(0.0, 1.0, 10)
        with pytest.raises(InputDomainError):
            QuadratureRule(LOG_TRAPEZOID, 10, (0.0, 1.0))

    def test_knee_only_on_log_trapezoid(self) -> None:
        """Test that other rule kinds reject a knee."""
        with pytest.raises(InputDomainError):
            QuadratureRule(TRAPEZOID, 10, (0.0, 1.0), knee=0.1)
        with pytest.raises(InputDomainError):
            QuadratureRule(LOG_TRAPEZOID, 10, (1e-3, 1.0), knee=0.0)
        assert QuadratureRule(LOG_TRAPEZOID, 10, (1e-3, 1.0), knee=0.1).describe()["knee"] == 0.1


@pytest.mark.unit
class TestPriors:
    """Tests for prior densities and their quadrature."""

    def test_standard_normal_moments(self) -> None:
        """Test the quadrature moments of N(0, 1)."""
        prior = StandardNormalPrior()

        assert _moments(prior, 0) == pytest.approx(1.0, abs=1e-12)
        assert _moments(prior, 1) == pytest.approx(0.0, abs=1e-12)
        assert _moments(prior, 2) == pytest.approx(1.0, abs=1e-12)

    def test_standard_normal_trapezoid_override(self) -> None:
        """Test a declared trapezoid rule on the normal prior."""
        prior = StandardNormalPrior(QuadratureRule(TRAPEZOID, 401, (-8.5, 8.5)))

        assert _moments(prior, 0) == pytest.approx(1.0, abs=1e-12)
        assert _moments(prior, 2) == pytest.approx(1.0, abs=1e-10)

    def test_exponential_moments(self) -> None:
        """Test the quadrature moments of exponential(2)."""
        prior = ExponentialPrior(2.0)

        assert _moments(prior, 0) == pytest.approx(1.0, abs=1e-12)
        assert _moments(prior, 1) == pytest.approx(0.5, abs=1e-12)

    def test_exponential_default_rule_scales_with_rate(self) -> None:
        """Test that the default exponential rule spans the same lifetimes at any rate."""
        rule = ExponentialPrior.default_rule(2.0)

        assert rule.kind == LOG_TRAPEZOID
        assert rule.span == pytest.approx((0.5e-20, 375.0))
        assert _moments(ExponentialPrior(0.01), 1) == pytest.approx(100.0, rel=1e-12)

    def test_truncated_normal_mass(self) -> None:
        """Test that the truncated normal quadrature integrates to one."""
        prior = TruncatedNormalPrior(-2.0, 2.0)

        assert _moments(prior, 0) == pytest.approx(1.0, abs=1e-10)
        assert prior.cdf(2.0) == pytest.approx(1.0)

    def test_truncated_normal_needs_bounds(self) -> None:
        """Test that an unbounded truncation is rejected."""
        with pytest.raises(InputDomainError):
            TruncatedNormalPrior(0.0, math.inf)

    def test_discrete_prior_weights_must_sum_to_one(self) -> None:
        """Test that unnormalised discrete weights are rejected."""
        with pytest.raises(InputDomainError, match="sum to 1"):
            DiscretePrior([0, 1], [0.5, 0.6])

    def test_discrete_prior_quadrature_is_exact(self) -> None:
        """Test that a discrete prior integrates exactly over its points."""
        prior = DiscretePrior([1, 2], [0.25, 0.75])
        nodes, log_weights = prior.quadrature()

        assert list(nodes) == [1.0, 2.0]
        assert np.exp(log_weights) == pytest.approx([0.25, 0.75])

    def test_discrete_bin_masses(self) -> None:
        """Test prior mass per bin; the top edge belongs to the last bin."""
        prior = DiscretePrior.uniform([0, 1, 2, 3])

        assert prior.bin_masses([0.0, 1.5, 3.0]) == pytest.approx([0.5, 0.5])

    def test_tabulated_prior(self, rng: np.random.Generator) -> None:
        """Test a triangular tabulated prior."""
        prior = TabulatedPrior([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])

        assert prior.cdf(1.0) == pytest.approx(0.5)
        assert prior.pdf(0.5) == pytest.approx(0.5)
        assert _moments(prior, 0) == pytest.approx(1.0, abs=1e-4)
        assert prior.sample(20000, rng).mean() == pytest.approx(1.0, abs=0.02)

    def test_tabulated_prior_must_integrate_to_one(self) -> None:
        """Test that a tabulated density is not renormalised."""
        with pytest.raises(InputDomainError, match="integrates"):
            TabulatedPrior([0.0, 1.0], [1.0, 2.0])

    def test_uniform_proposal_needs_bounded_space(self, rng: np.random.Generator) -> None:
        """Test that the uniform proposal is refused on the real line."""
        with pytest.raises(UnsupportedConfigurationError):
            StandardNormalPrior().proposal_sample(10, "uniform", rng)

    def test_uniform_proposal_weights(self, rng: np.random.Generator) -> None:
        """Test that uniform-proposal importance weights average to one."""
        prior = TruncatedNormalPrior(-3.0, 3.0)
        h, weights = prior.proposal_sample(50000, "uniform", rng)

        assert np.all((h >= -3.0) & (h <= 3.0))
        assert weights.mean() == pytest.approx(1.0, abs=0.03)

    def test_unknown_proposal_mode(self, rng: np.random.Generator) -> None:
        """Test that unknown proposal modes are rejected."""
        with pytest.raises(InputDomainError):
            StandardNormalPrior().proposal_sample(10, "stratified", rng)


@pytest.mark.unit
class TestParams:
    """Tests for parameter functions of h."""

    def test_affine(self) -> None:
        """Test an affine vector parameter."""
        param = Affine([1.0, 0.0], [2.0, -1.0])

        assert param(np.array([0.5, 1.0])).tolist() == [[2.0, -0.5], [3.0, -1.0]]

    def test_power(self) -> None:
        """Test scale * |h| ** exponent."""
        assert float(Power(3.0, -1.0)(2.0)) == pytest.approx(1.5)

    def test_table_off_points(self) -> None:
        """Test that a table parameter rejects h outside its points."""
        table = Table([0.0, 1.0], [5.0, 6.0])

        assert float(table(1.0)) == 6.0
        with pytest.raises(InputDomainError):
            table(0.5)


@pytest.mark.unit
class TestSensors:
    """Tests for sensor density families."""

    def test_linear_gaussian_density(self) -> None:
        """Test the scalar linear Gaussian against scipy."""
        sensor = GaussianSensor.linear(slope=2.0, variance=0.5)
        value = sensor.log_density(np.array([[1.3]]), np.array([0.4]))

        assert value[0] == pytest.approx(stats.norm.logpdf(1.3, loc=0.8, scale=math.sqrt(0.5)))
        assert sensor.linear_coefficients() == pytest.approx((0.0, 2.0, 0.5))

    def test_multivariate_gaussian_density(self) -> None:
        """Test a correlated two-dimensional Gaussian against scipy."""
        covariance = [[2.0, 0.6], [0.6, 1.0]]
        sensor = GaussianSensor.from_covariance(Affine([0.0, 1.0], [1.0, 1.0]), covariance)
        a = np.array([[0.3, -0.2]])
        h = np.array([0.5])
        expected = stats.multivariate_normal.logpdf([0.3, -0.2], mean=[0.5, 1.5], cov=covariance)

        assert sensor.log_density(a, h)[0] == pytest.approx(expected)

    def test_gaussian_factor_must_be_lower_triangular(self) -> None:
        """Test that an upper-triangular factor is rejected."""
        with pytest.raises(InputDomainError, match="lower triangular"):
            GaussianSensor([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])

    def test_gaussian_variance_must_be_positive(self) -> None:
        """Test that a zero variance is rejected."""
        with pytest.raises(InputDomainError):
            GaussianSensor.scalar(0.0, variance=0.0)

    def test_gaussian_sampling_moments(self, rng: np.random.Generator) -> None:
        """Test that samples follow the declared mean and variance."""
        sensor = GaussianSensor.linear(slope=1.0, variance=4.0)
        draws = sensor.sample(np.full(40000, 3.0), rng)

        assert draws.shape == (40000, 1)
        assert draws.mean() == pytest.approx(3.0, abs=0.05)
        assert draws.var() == pytest.approx(4.0, rel=0.05)

    def test_exponential_density(self) -> None:
        """Test the exponential density and its support."""
        sensor = ExponentialSensor()
        values = sensor.log_density(np.array([[0.5], [-0.5]]), np.array([2.0, 2.0]))

        assert values[0] == pytest.approx(math.log(2.0) - 1.0)
        assert values[1] == -math.inf

    def test_poisson_density(self) -> None:
        """Test the Poisson pmf against scipy."""
        sensor = PoissonSensor()

        assert sensor.log_density(np.array([[3.0]]), np.array([2.0]))[0] == pytest.approx(
            stats.poisson.logpmf(3, 2.0)
        )

    def test_uniform_density(self) -> None:
        """Test the uniform density on [0, h]."""
        sensor = UniformSensor(0.0, Affine(0.0, 1.0))
        values = sensor.density(np.array([[0.5], [2.5]]), np.array([2.0, 2.0]))

        assert values.tolist() == pytest.approx([0.5, 0.0])

    def test_mixture_weights_must_sum_to_one(self) -> None:
        """Test that mixture weights are not renormalised."""
        with pytest.raises(InputDomainError):
            MixtureSensor([ExponentialSensor(), ExponentialSensor()], [0.5, 0.6])

    def test_narrow_wide_mixture_density(self) -> None:
        """Test the narrow/wide Gaussian mixture against its components."""
        sensor = narrow_wide_gaussian_mixture()
        expected = 0.5 * stats.norm.pdf(0.9, loc=1.0, scale=0.1) + 0.5 * stats.norm.pdf(
            0.9, loc=0.7, scale=3.0
        )

        assert sensor.density(np.array([[0.9]]), np.array([1.0]))[0] == pytest.approx(expected)

    def test_exponential_uniform_mixture_support(self) -> None:
        """Test that the exponential/uniform mixture lives on the half-line."""
        sensor = exponential_uniform_mixture()
        values = sensor.density(np.array([[0.5], [-0.1]]), np.array([1.0, 1.0]))

        assert values[0] == pytest.approx(0.5 * math.exp(-0.5) + 0.5)
        assert values[1] == 0.0

    @pytest.mark.parametrize("h", [1e-4, 0.3, 1.0, 4.0])
    @pytest.mark.parametrize("factory", [exponential_uniform_mixture, narrow_wide_gaussian_mixture])
    def test_restricted_mixtures_integrate_to_one(self, factory, h: float) -> None:
        """Test that a mixture conditioned on [0, 5] is a density on [0, 5]."""
        sensor = factory((0.0, 5.0))

        def density(x: float) -> float:
            return float(sensor.density(np.array([[x]]), np.array([h]))[0])

        total, _ = integrate.quad(density, 0.0, 5.0, points=[h, min(3.0 * h, 4.9)], limit=200)

        assert total == pytest.approx(1.0, abs=1e-6)
        assert density(5.5) == 0.0

    def test_restricted_samples_stay_in_range(self, rng: np.random.Generator) -> None:
        """Test that restricted sampling redraws features outside the range."""
        sensor = RestrictedSensor(narrow_wide_gaussian_mixture(), 0.0, 5.0)
        h = np.repeat([0.05, 1.0, 4.0], 2000)

        features = sensor.sample(h, rng)

        assert features.shape == (6000, 1)
        assert np.all((features >= 0.0) & (features <= 5.0))
        assert sensor.space.lo == 0.0
        assert sensor.space.hi == 5.0

    def test_restricted_cdf(self) -> None:
        """Test the renormalised distribution function of a restricted exponential."""
        sensor = RestrictedSensor(ExponentialSensor(), 0.0, 2.0)
        expected = -math.expm1(-1.0) / -math.expm1(-2.0)

        assert float(sensor.cdf(1.0, 1.0)) == pytest.approx(expected)
        assert float(sensor.cdf(3.0, 1.0)) == 1.0
        assert sensor.describe()["range"] == [0.0, 2.0]

    def test_restricted_needs_continuous_scalar(self) -> None:
        """Test that counts and multivariate sensors cannot be restricted."""
        with pytest.raises(InputDomainError):
            RestrictedSensor(PoissonSensor(), 0.0, 5.0)
        with pytest.raises(InputDomainError):
            RestrictedSensor(
                GaussianSensor.from_covariance([0.0, 0.0], [[1, 0], [0, 1]]), 0.0, 5.0
            )
        with pytest.raises(InputDomainError):
            RestrictedSensor(ExponentialSensor(), 5.0, 5.0)

    def test_discrete_output_sensor(self, rng: np.random.Generator) -> None:
        """Test a tabulated discrete-output sensor."""
        sensor = DiscreteOutputSensor([0.0, 1.0], [1.0, 2.0], [[0.9, 0.1], [0.2, 0.8]])

        assert sensor.density(np.array([[1.0]]), np.array([2.0]))[0] == pytest.approx(0.8)
        assert sensor.density(np.array([[0.5]]), np.array([2.0]))[0] == 0.0
        assert set(sensor.sample(np.full(100, 1.0), rng)[:, 0]) <= {0.0, 1.0}

    def test_discrete_output_rows_must_sum_to_one(self) -> None:
        """Test that output probability rows are checked."""
        with pytest.raises(InputDomainError):
            DiscreteOutputSensor([0.0, 1.0], [1.0], [[0.5, 0.6]])

    def test_scalar_cdf(self) -> None:
        """Test the distribution function of scalar sensors."""
        assert float(ExponentialSensor().cdf(1.0, 2.0)) == pytest.approx(1.0 - math.exp(-2.0))
        assert GaussianSensor.linear(1.0, 1.0).has_cdf
        assert not GaussianSensor.from_covariance([0.0, 0.0], [[1, 0], [0, 1]]).has_cdf
