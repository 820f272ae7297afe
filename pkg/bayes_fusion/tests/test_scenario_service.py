"""
Unit tests for the checked pointwise scenario operations.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from bayes_fusion.distributions import (
    DiscretePrior,
    ExponentialSensor,
    GaussianSensor,
    PoissonSensor,
    StandardNormalPrior,
    exponential_uniform_mixture,
    narrow_wide_gaussian_mixture,
)
from bayes_fusion.distributions.params import Affine
from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.services import scenario_service
from bayes_fusion.spaces import ObjectSpace


@pytest.mark.unit
class TestDensity:
    """Tests for density and log_density."""

    def test_standard_normal_at_mode(self) -> None:
        """Test the unit Gaussian sensor at a = h = 0."""
        sensor = GaussianSensor.linear(1.0, 1.0)

        assert scenario_service.density(sensor, 0.0, 0.0) == pytest.approx(
            1.0 / math.sqrt(2.0 * math.pi), rel=1e-12
        )

    def test_exponential_at_zero(self) -> None:
        """Test that the rate-h density at 0 equals h."""
        assert scenario_service.density(ExponentialSensor(), 0.0, 2.0) == pytest.approx(2.0)

    def test_exponential_uniform_mixture(self) -> None:
        """Test the mixture density by direct substitution."""
        value = scenario_service.density(exponential_uniform_mixture(), 1.0, 2.0)

        assert value == pytest.approx(math.exp(-2.0) + 0.25, rel=1e-12)

    def test_log_and_linear_agree(self) -> None:
        """Test that exp(log_density) matches density."""
        sensor = narrow_wide_gaussian_mixture()

        for a, h in ((0.7, 1.0), (2.0, 2.5), (-1.0, 0.3)):
            log_value = scenario_service.log_density(sensor, a, h)
            assert math.exp(log_value) == pytest.approx(
                scenario_service.density(sensor, a, h), rel=1e-12
            )

    def test_uniform_part_vanishes_above_h(self) -> None:
        """Test that the uniform part vanishes above h."""
        value = scenario_service.density(exponential_uniform_mixture(), 3.0, 2.0)

        assert value == pytest.approx(math.exp(-6.0))

    @pytest.mark.parametrize("h", [0.25, 0.5, 1.0, 2.0, 4.0])
    def test_continuous_families_integrate_to_one(self, h: float) -> None:
        """Test that densities integrate to 1 over the feature space."""
        for sensor, lo, hi in (
            (ExponentialSensor(), 0.0, math.inf),
            (exponential_uniform_mixture(), 0.0, math.inf),
            (narrow_wide_gaussian_mixture(), -math.inf, math.inf),
        ):
            def pdf(a: float) -> float:
                return scenario_service.density(sensor, a, h)

            total = sum(
                integrate.quad(pdf, a0, a1, limit=200)[0] for a0, a1 in ((lo, h), (h, hi))
            )
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_poisson_sums_to_one(self) -> None:
        """Test that Poisson probabilities sum to 1."""
        total = sum(scenario_service.density(PoissonSensor(), k, 2.0) for k in range(60))

        assert total == pytest.approx(1.0, abs=1e-12)

    def test_feature_outside_space(self) -> None:
        """Test that a negative feature is rejected for a half-line sensor."""
        with pytest.raises(InputDomainError, match="outside the sensor feature space"):
            scenario_service.density(ExponentialSensor(), -1.0, 2.0)

    def test_non_integer_count(self) -> None:
        """Test that a fractional count is rejected for a Poisson sensor."""
        with pytest.raises(InputDomainError):
            scenario_service.log_density(PoissonSensor(), 1.5, 2.0)

    def test_object_outside_space(self) -> None:
        """Test that h outside the object space is rejected."""
        with pytest.raises(InputDomainError, match="outside"):
            scenario_service.density(
                ExponentialSensor(), 1.0, -2.0, ObjectSpace.interval(0.0, math.inf)
            )

    def test_wrong_feature_shape(self) -> None:
        """Test that a feature vector of the wrong length is rejected."""
        with pytest.raises(InputDomainError, match="shape"):
            scenario_service.density(GaussianSensor.linear(1.0, 1.0), [0.0, 1.0], 0.0)


@pytest.mark.unit
class TestSample:
    """Tests for sample and sample_prior."""

    def test_poisson_mean(self, rng: np.random.Generator) -> None:
        """Test the empirical mean of Poisson draws."""
        draws = PoissonSensor().sample(np.full(100_000, 2.0), rng)

        assert float(np.mean(draws)) == pytest.approx(2.0, abs=0.03)

    def test_correlated_gaussian(self, rng: np.random.Generator) -> None:
        """Test that mu + V G has covariance V V^T."""
        factor = np.array([[1.0, 0.0], [0.5, 1.0]])
        sensor = GaussianSensor(Affine([0.0, 0.0], [0.0, 0.0]), factor)

        draws = sensor.sample(np.zeros(100_000), rng)

        assert np.allclose(np.cov(draws.T), factor @ factor.T, atol=0.05)

    def test_single_draw(self, rng: np.random.Generator) -> None:
        """Test one checked draw."""
        draw = scenario_service.sample(GaussianSensor.linear(1.0, 1.0), 0.0, rng)

        assert draw.shape == (1,)

    def test_single_draw_checks_object(self, rng: np.random.Generator) -> None:
        """Test that a draw at an h outside I is rejected."""
        with pytest.raises(InputDomainError):
            scenario_service.sample(
                ExponentialSensor(), -1.0, rng, ObjectSpace.interval(0.0, math.inf)
            )

    def test_exponential_sampler_matches_density(self, rng: np.random.Generator) -> None:
        """Test exponential draws with a KS test."""
        draws = ExponentialSensor().sample(np.full(100_000, 2.0), rng).ravel()

        assert stats.kstest(draws, stats.expon(scale=0.5).cdf).pvalue > 1e-3

    def test_poisson_sampler_matches_density(self, rng: np.random.Generator) -> None:
        """Test Poisson draws with a chi-square test on the low counts."""
        draws = PoissonSensor().sample(np.full(100_000, 2.0), rng).ravel().astype(int)
        observed = np.bincount(np.minimum(draws, 8), minlength=9)
        expected = stats.poisson(2.0).pmf(np.arange(8)) * draws.size
        expected = np.append(expected, draws.size - expected.sum())

        assert stats.chisquare(observed, expected).pvalue > 1e-3

    def test_prior_mode_weights(self, rng: np.random.Generator) -> None:
        """Test that sampling the prior gives unit weights."""
        _, weight = scenario_service.sample_prior(StandardNormalPrior(), "prior", rng)

        assert weight == 1.0

    def test_uniform_discrete_frequencies(self, rng: np.random.Generator) -> None:
        """Test that uniform mode visits each point equally often."""
        prior = DiscretePrior.uniform([0.0, 1.0, 2.0, 3.0])

        h, _ = prior.proposal_sample(100_000, "uniform", rng)

        frequencies = np.bincount(h.astype(int), minlength=4) / h.size
        assert np.allclose(frequencies, 0.25, atol=0.01)

    def test_uniform_discrete_weights(self, rng: np.random.Generator) -> None:
        """Test the importance weights of a non-uniform discrete prior."""
        prior = DiscretePrior([1.0, 2.0], [0.75, 0.25])
        seen = {}

        for _ in range(50):
            h, weight = scenario_service.sample_prior(prior, "uniform", rng)
            seen[h] = weight

        assert seen == {1.0: 1.5, 2.0: 0.5}

    def test_uniform_on_unbounded_space(self, rng: np.random.Generator) -> None:
        """Test that uniform mode needs a bounded object space."""
        with pytest.raises(UnsupportedConfigurationError):
            scenario_service.sample_prior(StandardNormalPrior(), "uniform", rng)
