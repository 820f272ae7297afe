"""
Tests for Monte Carlo sampling, performance grids and risk estimation.
"""

import numpy as np
import pytest

from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.models import GridSpec, Histogram
from bayes_fusion.services.builtin_scenarios import builtin_scenario
from bayes_fusion.services.fusion_service import FusionRule
from bayes_fusion.services.montecarlo_service import (
    LIKELIHOOD,
    THEOREM4_BOUND,
    MonteCarloService,
    accumulate,
    compare_risks,
    estimate_performance,
    estimate_risk,
    risk_from_grid,
)
from bayes_fusion.services.streams import stream
from bayes_fusion.services.validation_service import closed_form_grid
from bayes_fusion.spaces import CostFunction


class RecordingRule:
    """Wraps a rule and records how many rows each fusion call receives."""

    def __init__(self, rule: FusionRule):
        self.rule = rule
        self.scenario = rule.scenario
        self.decision_space = rule.decision_space
        self.label = rule.label
        self.sizes = []

    def fuse_batch(self, features: np.ndarray) -> np.ndarray:
        self.sizes.append(len(features))
        return self.rule.fuse_batch(features)

    def soft_batch(self, features: np.ndarray) -> np.ndarray:
        self.sizes.append(len(features))
        return self.rule.soft_batch(features)


@pytest.mark.unit
class TestStreams:
    """Tests for seeded sub-batch streams."""

    def test_same_seed_same_stream(self) -> None:
        """Test that a stream depends only on seed and index."""
        assert stream(5, 3).random() == stream(5, 3).random()

    def test_indices_are_independent(self) -> None:
        """Test that sibling streams differ."""
        first, second = stream(5, 0), stream(5, 1)

        assert first.random() != second.random()


@pytest.mark.unit
class TestSampling:
    """Tests for MonteCarloService.draw."""

    def test_deterministic_across_worker_counts(self, gauss_scenario) -> None:
        """Test that the worker count does not change the samples."""
        one = MonteCarloService(max_concurrent=1, chunk_size=500).draw(
            gauss_scenario, 2300, "prior", 11
        )
        many = MonteCarloService(max_concurrent=4, chunk_size=500).draw(
            gauss_scenario, 2300, "prior", 11
        )

        assert np.array_equal(one.objects, many.objects)
        assert np.array_equal(one.features, many.features)
        assert one.chunk_bounds == ((0, 500), (500, 1000), (1000, 1500), (1500, 2000), (2000, 2300))

    def test_different_seeds_differ(self, service, gauss_scenario) -> None:
        """Test that the seed changes the samples."""
        first = service.draw(gauss_scenario, 100, "prior", 1)
        second = service.draw(gauss_scenario, 100, "prior", 2)

        assert not np.array_equal(first.objects, second.objects)

    def test_prior_mode_has_unit_weights(self, service, gauss_scenario) -> None:
        """Test that sampling from the prior needs no importance weights."""
        batch = service.draw(gauss_scenario, 500, "prior", 1)

        assert batch.features.shape == (500, 2)
        assert np.all(batch.weights == 1.0)

    def test_uniform_mode_on_unbounded_space(self, service, gauss_scenario) -> None:
        """Test that the uniform proposal is refused on the real line."""
        with pytest.raises(UnsupportedConfigurationError):
            service.draw(gauss_scenario, 100, "uniform", 1)

    def test_uniform_mode_on_discrete_space(self, service, poisson_scenario) -> None:
        """Test the uniform proposal over a point list."""
        batch = service.draw(poisson_scenario, 1000, "uniform", 1)

        assert set(batch.objects.tolist()) <= {1.0, 2.0}
        assert np.all(batch.weights == 1.0)

    def test_sample_count_must_be_positive(self, service, gauss_scenario) -> None:
        """Test that L = 0 is rejected."""
        with pytest.raises(InputDomainError):
            service.draw(gauss_scenario, 0, "prior", 1)

    def test_unknown_mode(self, service, gauss_scenario) -> None:
        """Test that unknown proposal modes are rejected."""
        with pytest.raises(InputDomainError):
            service.draw(gauss_scenario, 10, "sobol", 1)

    @pytest.mark.asyncio
    async def test_draw_batch(self, service, expo_scenario) -> None:
        """Test drawing directly inside a running event loop."""
        batch = await service.draw_batch(expo_scenario, 2500, "prior", 3)

        assert batch.size == 2500
        assert len(batch.chunk_bounds) == 3
        assert np.all(batch.features >= 0)

    @pytest.mark.asyncio
    async def test_evaluate_batch(self, service, gauss_scenario) -> None:
        """Test that concurrent evaluation matches a single pass."""
        batch = await service.draw_batch(gauss_scenario, 2500, "prior", 3)
        rule = FusionRule(gauss_scenario)

        decisions = await service.evaluate_batch(rule, batch)

        assert np.allclose(decisions, rule.fuse_batch(batch.features), rtol=0.0, atol=1e-13)


@pytest.mark.unit
class TestRisk:
    """Tests for Bayes risk estimation."""

    def test_gaussian_risk(self, service, gauss_scenario) -> None:
        """Test the estimate against v / (M u^2 + v) = 1/3."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 20000, "prior", 5)

        risk = estimate_risk(rule, batch)

        assert risk.estimate == pytest.approx(1.0 / 3.0, abs=0.02)
        assert risk.half_width > 0
        assert risk.samples == 20000

    def test_even_cost_bound_is_wider(self, service, gauss_scenario) -> None:
        """Test that the even-cost bound is more conservative than the CLT interval."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 5000, "prior", 5)

        clt = estimate_risk(rule, batch)
        bound = estimate_risk(rule, batch, method=THEOREM4_BOUND)

        assert bound.estimate == clt.estimate
        assert bound.half_width > clt.half_width
        assert bound.method == THEOREM4_BOUND

    def test_even_cost_bound_needs_tag(self, service, expo_scenario) -> None:
        """Test that the even-cost bound is refused for untagged scenarios."""
        rule = FusionRule(expo_scenario)
        batch = service.draw(expo_scenario, 100, "prior", 5)

        with pytest.raises(UnsupportedConfigurationError):
            estimate_risk(rule, batch, method=THEOREM4_BOUND)

    def test_estimators_fuse_one_sub_batch_at_a_time(self, service, gauss_scenario) -> None:
        """Test that risk, comparison and performance never fuse more rows than a sub-batch."""
        recording = RecordingRule(FusionRule(gauss_scenario))
        batch = service.draw(gauss_scenario, 3500, "prior", 6)

        estimate_risk(recording, batch)
        estimate_performance(recording, batch)
        compare_risks(recording, recording, batch)

        assert max(recording.sizes) <= 1000
        assert sum(recording.sizes) == 4 * 3500

    def test_confidence_range(self, service, gauss_scenario) -> None:
        """Test that R must lie strictly between 0 and 1."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 100, "prior", 5)

        with pytest.raises(InputDomainError):
            estimate_risk(rule, batch, confidence=1.0)

    def test_sample_mean_is_worse(self, service, gauss_scenario) -> None:
        """Test the paired comparison against the sample-mean estimator."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 20000, "prior", 5)

        comparison = compare_risks(rule, lambda a: a.sum(axis=1) / 2.0, batch)

        assert comparison.difference == pytest.approx(0.5 - 1.0 / 3.0, abs=0.02)
        assert comparison.rule_is_better

    def test_uniform_proposal_risk(self, service) -> None:
        """Test that importance weights keep the risk unbiased on a bounded scenario."""
        scenario = builtin_scenario("gauss", {"M": "2", "bound": "3"})
        rule = FusionRule(scenario)
        prior_batch = service.draw(scenario, 20000, "prior", 8)
        uniform_batch = service.draw(scenario, 20000, "uniform", 8)

        prior_risk = estimate_risk(rule, prior_batch)
        uniform_risk = estimate_risk(rule, uniform_batch)

        assert uniform_risk.estimate == pytest.approx(prior_risk.estimate, abs=0.03)


@pytest.mark.unit
class TestPerformance:
    """Tests for performance grid estimation."""

    def test_rows_integrate_to_one(self, service, gauss_scenario) -> None:
        """Test that every populated row is a density over c."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 20000, "prior", 9)

        grid = estimate_performance(rule, batch, GridSpec(decision_bins=50, object_bins=8))
        report = grid.normalization_report()

        assert grid.shape == (8, 50)
        assert report["populated_rows"] == 8
        assert report["max_row_integral_deviation"] < 1e-9
        assert report["total_samples"] == 20000

    def test_likelihood_weighting(self, service, gauss_scenario) -> None:
        """Test that the literal likelihood weighting also yields normalised rows."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 5000, "prior", 9)

        grid = estimate_performance(
            rule, batch, GridSpec(decision_bins=20, object_bins=4), weighting=LIKELIHOOD
        )

        assert grid.normalization_report()["max_row_integral_deviation"] < 1e-9

    def test_unknown_weighting(self, service, gauss_scenario) -> None:
        """Test that unknown weightings are rejected."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 10, "prior", 9)

        with pytest.raises(InputDomainError):
            estimate_performance(rule, batch, weighting="flat")

    def test_discrete_axes(self, service) -> None:
        """Test a grid over discrete I and discrete K."""
        scenario = builtin_scenario("fourclass-hard")
        rule = FusionRule(scenario)
        batch = service.draw(scenario, 4000, "prior", 2)

        grid = estimate_performance(rule, batch)

        assert grid.shape == (4, 4)
        assert grid.decision_edges is None
        assert grid.object_edges is None
        assert np.allclose(grid.row_integrals(), 1.0)
        assert grid.dropped == 0

    def test_empty_window(self, service, gauss_scenario) -> None:
        """Test that a window with no samples leaves every row empty."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 1000, "prior", 9)

        grid = estimate_performance(rule, batch, GridSpec(10, 4, object_range=(10.0, 12.0)))

        assert bool(np.all(grid.empty_rows))
        assert np.all(np.isnan(grid.values))
        assert grid.dropped == 1000
        with pytest.raises(InputDomainError):
            risk_from_grid(grid, gauss_scenario.prior, gauss_scenario.cost)

    def test_grid_risk(self, service, gauss_scenario) -> None:
        """Test the discretised double integral against the Monte Carlo risk."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 50000, "prior", 4)

        grid = estimate_performance(rule, batch)

        assert risk_from_grid(grid, gauss_scenario.prior, gauss_scenario.cost) == pytest.approx(
            1.0 / 3.0, abs=0.02
        )

    def test_expo_decisions_stay_below_ceiling(self, service, expo_scenario) -> None:
        """Test that no decision exceeds M + 1."""
        rule = FusionRule(expo_scenario)
        batch = service.draw(expo_scenario, 5000, "prior", 4)

        grid = estimate_performance(rule, batch)

        assert grid.max_decision <= 3.0 + 1e-9

    def test_merge_is_exact_and_associative(self, service, gauss_scenario) -> None:
        """Test that merging sub-batch histograms in any grouping equals one pass."""
        rule = FusionRule(gauss_scenario)
        batch = service.draw(gauss_scenario, 3000, "prior", 12)
        decisions = rule.fuse_batch(batch.features)
        decision_edges = np.linspace(-3.0, 3.0, 31)
        object_edges = np.linspace(-3.0, 3.0, 9)
        axes = (
            (0.5 * (decision_edges[:-1] + decision_edges[1:]), decision_edges),
            (0.5 * (object_edges[:-1] + object_edges[1:]), object_edges),
        )

        def part(start: int, stop: int) -> Histogram:
            return accumulate(
                decisions[start:stop], batch.objects[start:stop], batch.weights[start:stop], *axes
            )

        first, second, third = part(0, 1000), part(1000, 2200), part(2200, 3000)
        single = part(0, 3000)

        for merged in (first.merge(second).merge(third), first.merge(second.merge(third))):
            assert np.array_equal(merged.weights, single.weights)
            assert np.array_equal(merged.squared_weights, single.squared_weights)
            assert np.array_equal(merged.counts, single.counts)
            assert merged.dropped == single.dropped
            assert merged.max_decision == single.max_decision
            assert merged.min_decision == single.min_decision


@pytest.mark.slow
class TestConvergence:
    """Large-sample checks of the estimators against closed forms."""

    def test_performance_matches_closed_form(self) -> None:
        """Test the Gaussian grid against the tabulated closed-form density."""
        scenario = builtin_scenario("gauss", {"M": "2"})
        spec = GridSpec(
            decision_bins=200,
            object_bins=32,
            decision_range=(-4.0, 4.0),
            object_range=(-2.0, 2.0),
        )
        rule = FusionRule(scenario)
        batch = MonteCarloService().draw(scenario, 1_000_000, "prior", 21)

        grid = estimate_performance(rule, batch, spec)
        oracle = closed_form_grid("gauss", {"M": "2"}, spec)

        assert not grid.empty_rows.any()
        assert float(np.mean(np.abs(grid.values - oracle.values))) < 0.02
        middle = spec.object_bins // 2
        peak_shift = np.argmax(grid.values[middle]) - np.argmax(oracle.values[middle])
        assert abs(int(peak_shift)) <= 1

    @pytest.mark.parametrize(
        "m,samples", [(2, 200_000), (10, 200_000), (50, 100_000), (300, 60_000)]
    )
    def test_risk_decays_like_one_over_m(self, m: int, samples: int) -> None:
        """Test that the squared-error risk tracks v / (M u^2 + v)."""
        scenario = builtin_scenario("gauss", {"M": str(m)})
        rule = FusionRule(scenario)
        batch = MonteCarloService().draw(scenario, samples, "prior", 31)

        risk = estimate_risk(rule, batch, confidence=0.999)

        assert risk.contains(1.0 / (m + 1))

    @pytest.mark.parametrize("epsilon", [0.05, 0.2])
    def test_quartic_cost_prefers_posterior_mean(self, epsilon: float) -> None:
        """Test that perturbing the posterior mean by eps sin(sum a) raises the quartic risk."""
        scenario = builtin_scenario("gauss", {"M": "2"})
        rule = FusionRule(scenario)
        batch = MonteCarloService().draw(scenario, 1_000_000, "prior", 41)

        comparison = compare_risks(
            rule,
            lambda a: rule.fuse_batch(a) + epsilon * np.sin(np.sum(a, axis=1)),
            batch,
            cost=CostFunction.even_power(4),
            confidence=0.99,
        )

        assert comparison.rule_is_better

    def test_interval_coverage(self) -> None:
        """Test that 95% intervals cover the true risk in most reruns."""
        scenario = builtin_scenario("gauss", {"M": "2"})
        rule = FusionRule(scenario)
        service = MonteCarloService()

        covered = sum(
            estimate_risk(rule, service.draw(scenario, 10_000, "prior", seed)).contains(1.0 / 3.0)
            for seed in range(200)
        )

        assert covered >= 180

    def test_error_decays_like_root_l(self) -> None:
        """Test the log-log slope of the risk error against the sample count."""
        scenario = builtin_scenario("gauss", {"M": "2"})
        rule = FusionRule(scenario)
        service = MonteCarloService()
        sizes = [1_000, 10_000, 100_000, 1_000_000]

        errors = []
        for exponent, size in enumerate(sizes):
            estimates = [
                estimate_risk(rule, service.draw(scenario, size, "prior", seed)).estimate
                for seed in range(100 * exponent, 100 * exponent + 16)
            ]
            errors.append(float(np.mean(np.abs(np.array(estimates) - 1.0 / 3.0))))
        slope = np.polyfit(np.log10(sizes), np.log10(errors), 1)[0]

        assert slope == pytest.approx(-0.5, abs=0.15)

    def test_large_network_concentrates(self) -> None:
        """Test the row spread at h = 0 for 300 sensors under a uniform proposal."""
        scenario = builtin_scenario("gauss", {"M": "300", "bound": "4"})
        rule = FusionRule(scenario)
        batch = MonteCarloService().draw(scenario, 60_000, "uniform", 51)
        spec = GridSpec(
            decision_bins=400,
            object_bins=64,
            decision_range=(-4.0, 4.0),
            object_range=(-1.0, 1.0),
        )

        grid = estimate_performance(rule, batch, spec)
        _, spread = grid.row_moments()
        middle = int(np.argmin(np.abs(grid.object_centers)))

        assert float(np.mean(batch.objects)) == pytest.approx(0.0, abs=0.05)
        assert float(np.var(batch.objects)) == pytest.approx(16.0 / 3.0, abs=0.1)
        assert not grid.empty_rows[middle]
        assert spread[middle] < 0.07
        assert spread[middle] == pytest.approx(np.sqrt(300.0) / 301.0, abs=0.008)
