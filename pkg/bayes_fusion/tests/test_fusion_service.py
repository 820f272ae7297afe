"""
Unit tests for the posterior-mean fusion rule and the quantizer.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from bayes_fusion.exceptions import (
    InputDomainError,
    NumericalDegeneracyError,
    UnsupportedConfigurationError,
)
from bayes_fusion.services import analytic, fusion_service
from bayes_fusion.services.builtin_scenarios import builtin_scenario
from bayes_fusion.services.fusion_service import (
    ROWS_PER_PASS,
    FusionRule,
    enumerate_joint,
    enumerate_risk,
    log_joint,
    posterior_mean,
    posterior_mean_batch,
    quantize,
    quantize_array,
)
from bayes_fusion.services.montecarlo_service import draw_chunk
from bayes_fusion.spaces import CostFunction, DecisionSpace


@pytest.mark.unit
class TestQuantize:
    """Tests for quantization onto K."""

    def test_discrete_ties_go_down(self) -> None:
        """Test that a midpoint maps to the smaller point."""
        space = DecisionSpace.discrete([0, 1, 2, 3])

        assert quantize(space, 0.5) == 0.0
        assert quantize(space, 2.5) == 2.0
        assert quantize(space, 2.7) == 3.0

    def test_discrete_outside_range(self) -> None:
        """Test values beyond the extreme points."""
        space = DecisionSpace.discrete([0, 1, 2, 3])

        assert quantize_array(space, [-5.0, 9.0]).tolist() == [0.0, 3.0]

    def test_interval_clips(self) -> None:
        """Test clipping to a closed interval."""
        space = DecisionSpace.interval(0.0, 3.0)

        assert quantize_array(space, [-1.0, 1.5, 4.0]).tolist() == [0.0, 1.5, 3.0]

    def test_union_gap_ties_go_down(self) -> None:
        """Test that the middle of a gap maps to the lower interval."""
        space = DecisionSpace.union([[0.0, 1.0], [2.0, 3.0]])

        assert quantize(space, 1.5) == 1.0
        assert quantize(space, 1.6) == 2.0
        assert quantize(space, 0.4) == 0.4
        assert quantize(space, 7.0) == 3.0

    def test_real_line_is_identity(self) -> None:
        """Test that K = R leaves values untouched."""
        values = np.array([-1e6, 0.1, 42.0])

        assert quantize_array(DecisionSpace.real_line(), values).tolist() == values.tolist()


@pytest.mark.unit
class TestPosteriorMean:
    """Tests for the posterior mean."""

    def test_gaussian_closed_form(self, gauss_scenario, rng: np.random.Generator) -> None:
        """Test agreement with sum(a) / (M + 1) for unit Gaussian sensors."""
        h = rng.standard_normal((200, 1))
        features = h + rng.standard_normal((200, 2))

        soft = posterior_mean_batch(gauss_scenario, features)

        assert np.max(np.abs(soft - features.sum(axis=1) / 3.0)) < 1e-8

    def test_single_and_batch_agree(self, gauss_scenario) -> None:
        """Test that the checked single-vector entry point matches the batch."""
        features = np.array([[0.3, -1.2], [2.0, 1.0]])
        batch = posterior_mean_batch(gauss_scenario, features)

        assert posterior_mean(gauss_scenario, features[1]) == pytest.approx(batch[1], abs=1e-13)

    def test_chunking_does_not_change_results(self, expo_scenario) -> None:
        """Test that evaluating in chunks gives the same values."""
        features = np.abs(np.linspace(-2.0, 3.0, 50)).reshape(25, 2)

        whole = posterior_mean_batch(expo_scenario, features)
        chunked = posterior_mean_batch(expo_scenario, features, chunk_size=7)

        assert np.allclose(whole, chunked, rtol=0.0, atol=1e-13)

    def test_large_batches_run_in_bounded_passes(self, gauss_scenario, monkeypatch) -> None:
        """Test that a rule without a chunk size still bounds the rows per pass."""
        seen = []

        def recording(scenario, features):
            seen.append(len(features))
            return log_joint(scenario, features)

        monkeypatch.setattr(fusion_service, "log_joint", recording)
        features = np.tile([[0.5, -0.25]], (2 * ROWS_PER_PASS + 10, 1))

        soft = FusionRule(gauss_scenario).soft_batch(features)

        assert seen == [ROWS_PER_PASS, ROWS_PER_PASS, 10]
        assert np.allclose(soft, 0.25 / 3.0, rtol=0.0, atol=1e-8)

    def test_feature_outside_space(self, expo_scenario) -> None:
        """Test that a negative exponential feature is rejected."""
        with pytest.raises(InputDomainError, match="sensor 1"):
            posterior_mean(expo_scenario, [0.5, -0.5])

    def test_wrong_length(self, gauss_scenario) -> None:
        """Test that a joint vector of the wrong length is rejected."""
        with pytest.raises(InputDomainError):
            posterior_mean(gauss_scenario, [0.5, 0.5, 0.5])
        with pytest.raises(InputDomainError):
            posterior_mean_batch(gauss_scenario, np.zeros((4, 3)))

    def test_degenerate_denominator(self, gauss_scenario) -> None:
        """Test that an underflowing denominator raises with the offending vector."""
        with pytest.raises(NumericalDegeneracyError) as excinfo:
            posterior_mean_batch(gauss_scenario, np.array([[0.0, 0.0], [1000.0, -1000.0]]))

        assert excinfo.value.features == [1000.0, -1000.0]

    def test_discrete_prior_posterior(self, poisson_scenario) -> None:
        """Test the posterior mean over two object points."""
        # P(H = 2 | A = 0, B = 0) = e^-4 / (e^-2 + e^-4)
        high = math.exp(-4.0) / (math.exp(-2.0) + math.exp(-4.0))

        assert posterior_mean(poisson_scenario, [0.0, 0.0]) == pytest.approx(1.0 + high)


def _mixture_reference(scenario, a) -> float:
    """Posterior mean by adaptive integration, splitting at the likelihood kinks."""

    def joint(h: float, power: int) -> float:
        log_value = float(scenario.prior.log_pdf(h))
        for sensor, value in zip(scenario.sensors, a):
            log_value += float(sensor.log_density(np.array([[value]]), np.array([h]))[0])
        return h**power * math.exp(log_value)

    breaks = sorted({float(a[0]), min(float(a[1]), 3.9)})
    numerator, _ = integrate.quad(joint, 0.0, 4.0, args=(1,), points=breaks, limit=500)
    denominator, _ = integrate.quad(joint, 0.0, 4.0, args=(0,), points=breaks, limit=500)
    return numerator / denominator


@pytest.mark.unit
class TestPosteriorNearZero:
    """Tests for posteriors concentrated close to h = 0."""

    @pytest.mark.parametrize("a", [100.0, 1000.0, 40000.0])
    def test_exponential_large_feature(self, a: float) -> None:
        """Test a lone large exponential feature against (M + 1) / (a + 1)."""
        scenario = builtin_scenario("expo", {"M": "1"})

        assert posterior_mean(scenario, [a]) == pytest.approx(2.0 / (a + 1.0), rel=1e-6)

    @pytest.mark.parametrize("m", [1, 2, 8])
    def test_exponential_agrees_at_sampled_points(self, m: int) -> None:
        """Test the exponential rule at features drawn from the scenario itself."""
        scenario = builtin_scenario("expo", {"M": str(m)})
        features = draw_chunk(scenario, 3, 0, 1000, "prior").features
        params = analytic.ExponentialScenarioParams(M=m)

        soft = posterior_mean_batch(scenario, features)

        assert np.max(np.abs(soft - analytic.expo_fusion(params, features))) < 1e-6

    @pytest.mark.parametrize("a", [[1.19e-5, 0.05], [1.19e-5, 2.0], [0.3, 1.0]])
    def test_mixture_small_object(self, a: list) -> None:
        """Test that a tiny exponential-uniform feature leaves a usable posterior."""
        scenario = builtin_scenario("mixture")

        value = posterior_mean(scenario, a)

        assert 0.0 <= value <= 4.0
        assert value == pytest.approx(_mixture_reference(scenario, a), rel=0.03)

    def test_mixture_features_stay_in_range(self) -> None:
        """Test that mixture features beyond 5 are outside the feature space."""
        scenario = builtin_scenario("mixture")

        with pytest.raises(InputDomainError, match="sensor 1"):
            posterior_mean(scenario, [1.19e-5, 384082.5])


@pytest.mark.unit
class TestFusionRule:
    """Tests for FusionRule."""

    def test_decisions_lie_in_k(self) -> None:
        """Test that every decision of the hard four-class rule is a class."""
        scenario = builtin_scenario("fourclass-hard")
        rule = FusionRule(scenario)
        features = np.linspace(-3.0, 6.0, 40).reshape(20, 2)

        decisions = rule(features)

        assert set(decisions.tolist()) <= {0.0, 1.0, 2.0, 3.0}
        assert rule.fuse(features[0]) == decisions[0]

    def test_soft_is_posterior_mean(self, gauss_scenario) -> None:
        """Test that soft output equals the posterior mean on K = R."""
        rule = FusionRule(gauss_scenario)

        assert rule.soft([1.0, 2.0]) == pytest.approx(1.0, abs=1e-10)
        assert rule.fuse([1.0, 2.0]) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.unit
class TestEnumeration:
    """Tests for exact enumeration of count-valued scenarios."""

    def test_probabilities_sum_to_one(self, poisson_scenario) -> None:
        """Test that the truncated enumeration carries almost all the mass."""
        table = enumerate_joint(poisson_scenario)

        assert table.features.shape[1] == 2
        assert abs(table.truncated_mass) < 1e-12

    def test_continuous_object_space_rejected(self, gauss_scenario) -> None:
        """Test that continuous scenarios cannot be enumerated."""
        with pytest.raises(UnsupportedConfigurationError):
            enumerate_joint(gauss_scenario)

    def test_optimal_rule_beats_constant_decisions(self, poisson_scenario) -> None:
        """Test that the fusion rule has lower exact risk than any constant rule."""
        table = enumerate_joint(poisson_scenario)
        optimal = enumerate_risk(poisson_scenario, table=table)

        for constant in (1.0, 2.0):
            decisions = np.full(len(table.features), constant)
            assert optimal < enumerate_risk(poisson_scenario, decisions=decisions, table=table)

    def test_constant_rule_risk(self, poisson_scenario) -> None:
        """Test the exact risk of always deciding 1 under the squared cost."""
        table = enumerate_joint(poisson_scenario)
        decisions = np.ones(len(table.features))

        risk = enumerate_risk(
            poisson_scenario, decisions=decisions, cost=CostFunction.squared_error(), table=table
        )

        assert risk == pytest.approx(0.5, abs=1e-12)
