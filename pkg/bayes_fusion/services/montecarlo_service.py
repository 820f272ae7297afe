"""
Monte Carlo estimation of the performance density and the Bayes risk.

Samples (h_l, a_l) are drawn from the proposal distribution in fixed-size
sub-batches, each from its own seeded stream, with controlled concurrency.
Performance is a weighted histogram of the fused decisions per object bin;
risk is a weighted sample mean with CLT confidence bounds.
"""

import asyncio
import logging
import math
from typing import Any, Callable, List, Optional, Tuple

import numpy as np
from django.conf import settings
from scipy import special

from bayes_fusion.distributions.priors import PROPOSAL_MODES, PROPOSAL_UNIFORM, Prior
from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.models import (
    GridSpec,
    Histogram,
    PerformanceGrid,
    RiskComparison,
    RiskEstimate,
    SampleBatch,
    Scenario,
)
from bayes_fusion.services.fusion_service import Rule
from bayes_fusion.services.streams import stream
from bayes_fusion.spaces import CostFunction

logger = logging.getLogger(__name__)

CLT_EMPIRICAL = "clt-empirical"
THEOREM4_BOUND = "theorem4-bound"
RISK_METHODS = (CLT_EMPIRICAL, THEOREM4_BOUND)

IMPORTANCE = "importance"
LIKELIHOOD = "likelihood"
WEIGHTINGS = (IMPORTANCE, LIKELIHOOD)


def draw_chunk(
    scenario: Scenario, seed: int, index: int, size: int, mode: str
) -> SampleBatch:
    """Draw sub-batch ``index``: h from the proposal, then every sensor given h."""
    rng = stream(seed, index)
    objects, weights = scenario.prior.proposal_sample(size, mode, rng)
    features = np.concatenate([sensor.sample(objects, rng) for sensor in scenario.sensors], axis=1)
    return SampleBatch(objects=objects, features=features, weights=weights, seed=seed, mode=mode)


class MonteCarloService:
    """Service for drawing sample batches and fusing them with controlled concurrency."""

    def __init__(self, max_concurrent: Optional[int] = None, chunk_size: Optional[int] = None):
        """
        Initialize Monte Carlo service.

        Args:
            max_concurrent: Maximum number of sub-batches processed at once
            chunk_size: Samples per sub-batch; fixes the stream partition
        """
        self.max_concurrent = max_concurrent or settings.FUSION_MAX_WORKERS
        self.chunk_size = chunk_size or settings.FUSION_CHUNK_SIZE
        if self.max_concurrent < 1 or self.chunk_size < 1:
            raise InputDomainError("Worker count and chunk size must be positive")

    def partition(self, samples: int) -> List[Tuple[int, int]]:
        return [
            (start, min(start + self.chunk_size, samples))
            for start in range(0, samples, self.chunk_size)
        ]

    async def draw_batch(
        self, scenario: Scenario, samples: int, mode: str, seed: int
    ) -> SampleBatch:
        """
        Draw L samples from the proposal distribution.

        Args:
            scenario: Scenario to sample
            samples: Number of samples L
            mode: "prior" or "uniform"
            seed: Master seed

        Returns:
            SampleBatch whose sub-batches are in stream order

        Raises:
            UnsupportedConfigurationError: Uniform mode on an unbounded object space
        """
        if samples < 1:
            raise InputDomainError(f"Sample count must be at least 1, got {samples}")
        if mode not in PROPOSAL_MODES:
            raise InputDomainError(f"Unknown proposal mode '{mode}', expected {PROPOSAL_MODES}")
        if mode == PROPOSAL_UNIFORM and not (
            scenario.object_space.is_bounded or scenario.object_space.is_discrete
        ):
            raise UnsupportedConfigurationError(
                "Uniform proposal needs a bounded or discrete object space"
            )

        semaphore = asyncio.Semaphore(self.max_concurrent)

        async def run(index: int, start: int, stop: int) -> SampleBatch:
            async with semaphore:
                return await asyncio.to_thread(
                    draw_chunk, scenario, seed, index, stop - start, mode
                )

        bounds = self.partition(samples)
        parts = await asyncio.gather(
            *(run(index, start, stop) for index, (start, stop) in enumerate(bounds))
        )
        batch = SampleBatch.concatenate(parts, seed=seed, mode=mode)
        logger.info(
            f"Drew {samples} samples for {scenario.name} in {len(bounds)} sub-batches "
            f"(mode={mode}, seed={seed})"
        )
        return batch

    def draw(self, scenario: Scenario, samples: int, mode: str, seed: int) -> SampleBatch:
        return asyncio.run(self.draw_batch(scenario, samples, mode, seed))

    async def evaluate_batch(self, rule: Rule, batch: SampleBatch) -> np.ndarray:
        """Fuse every sample of the batch, one sub-batch per worker."""
        semaphore = asyncio.Semaphore(self.max_concurrent)

        async def run(part: SampleBatch) -> np.ndarray:
            async with semaphore:
                return await asyncio.to_thread(rule.fuse_batch, part.features)

        decisions = await asyncio.gather(*(run(part) for part in batch.sub_batches()))
        return np.concatenate(decisions)

    def evaluate(self, rule: Rule, batch: SampleBatch) -> np.ndarray:
        return asyncio.run(self.evaluate_batch(rule, batch))


def decide_in_chunks(decide: Callable[[np.ndarray], Any], batch: SampleBatch) -> np.ndarray:
    """Apply ``decide`` one sub-batch at a time so no pass sees more rows than a chunk."""
    return np.concatenate(
        [np.asarray(decide(batch.features[start:stop]), dtype=float)
         for start, stop in batch.chunk_bounds]
    )


# ---------------------------------------------------------------------------
# Performance grid
# ---------------------------------------------------------------------------

def _decision_axis(
    rule: Rule, prior: Prior, spec: GridSpec
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """(centers, widths, edges) of the decision axis; edges is None for discrete K."""
    space = rule.decision_space
    if space.is_discrete:
        points = space.point_array
        return points, np.ones(len(points)), None
    if spec.decision_range is not None:
        lo, hi = spec.decision_range
    else:
        window_lo, window_hi = prior.default_window()
        lo = space.lo if math.isfinite(space.lo) else window_lo
        hi = space.hi if math.isfinite(space.hi) else window_hi
        if not lo < hi:
            lo, hi = window_lo, window_hi
    edges = np.linspace(lo, hi, spec.decision_bins + 1)
    return 0.5 * (edges[:-1] + edges[1:]), np.diff(edges), edges


def _object_axis(prior: Prior, spec: GridSpec) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """(centers, edges) of the object axis; edges is None for discrete I."""
    if prior.space.is_discrete:
        return prior.space.point_array, None
    lo, hi = spec.object_range or prior.default_window()
    edges = np.linspace(lo, hi, spec.object_bins + 1)
    return 0.5 * (edges[:-1] + edges[1:]), edges


def _locate(values: np.ndarray, centers: np.ndarray, edges: Optional[np.ndarray]) -> np.ndarray:
    """Bin index per value, -1 when the value falls outside the axis."""
    if edges is None:
        index = np.clip(np.searchsorted(centers, values), 0, len(centers) - 1)
        return np.where(centers[index] == values, index, -1)
    index = np.searchsorted(edges, values, side="right") - 1
    index = np.where(values == edges[-1], len(edges) - 2, index)
    return np.where((index >= 0) & (index < len(edges) - 1), index, -1)


def likelihood_weights(scenario: Scenario, batch: SampleBatch) -> np.ndarray:
    """w_l times prod_m d_{A_m|H}(a_l, h_l), the literal per-sample weight."""
    log_like = np.zeros(batch.size)
    for sensor, block in zip(scenario.sensors, scenario.block_slices):
        log_like += sensor.log_density(batch.features[:, block], batch.objects)
    return batch.weights * np.exp(log_like)


def accumulate(
    decisions: np.ndarray,
    objects: np.ndarray,
    weights: np.ndarray,
    decision_axis: Tuple[np.ndarray, Optional[np.ndarray]],
    object_axis: Tuple[np.ndarray, Optional[np.ndarray]],
) -> Histogram:
    """Histogram of one sub-batch."""
    columns = _locate(decisions, *decision_axis)
    rows = _locate(objects, *object_axis)
    n_rows, n_cols = len(object_axis[0]), len(decision_axis[0])
    inside = (columns >= 0) & (rows >= 0)
    flat = rows[inside] * n_cols + columns[inside]
    kept = weights[inside]
    return Histogram(
        weights=np.bincount(flat, weights=kept, minlength=n_rows * n_cols).reshape(n_rows, n_cols),
        squared_weights=np.bincount(rows[inside], weights=kept**2, minlength=n_rows),
        counts=np.bincount(rows[inside], minlength=n_rows).astype(np.int64),
        dropped=int(np.sum(~inside)),
        max_decision=float(np.max(decisions)) if len(decisions) else -math.inf,
        min_decision=float(np.min(decisions)) if len(decisions) else math.inf,
    )


def _row_prior_mass(prior: Prior, centers: np.ndarray, edges: Optional[np.ndarray]) -> np.ndarray:
    if edges is None:
        return prior.pdf(centers)
    return prior.bin_masses(edges)


def estimate_performance(
    rule: Rule,
    batch: SampleBatch,
    grid_spec: Optional[GridSpec] = None,
    weighting: str = IMPORTANCE,
    decisions: Optional[np.ndarray] = None,
    scenario: Optional[Scenario] = None,
) -> PerformanceGrid:
    """
    Weighted histogram estimate of d_{C|H}(c, h).

    Each sample adds its weight to the cell (object bin of h_l, decision bin of
    fuse(a_l)); every populated row is then normalised to integrate to 1 over c.

    Args:
        rule: Fusion rule to evaluate
        batch: Samples from the proposal
        grid_spec: Binning (defaults to 200 decision bins x 64 object bins)
        weighting: "importance" (d_H/d_H') or "likelihood" (literal prescription)
        decisions: Precomputed fuse(a_l) for the batch
        scenario: Scenario of the samples (the rule's when None)

    Returns:
        PerformanceGrid; rows without samples are NaN and flagged empty
    """
    scenario = scenario or getattr(rule, "scenario")
    spec = grid_spec or GridSpec()
    if weighting not in WEIGHTINGS:
        raise InputDomainError(f"Unknown weighting '{weighting}', expected {WEIGHTINGS}")
    prior = scenario.prior
    if decisions is None:
        decisions = decide_in_chunks(rule.fuse_batch, batch)
    weights = batch.weights if weighting == IMPORTANCE else likelihood_weights(scenario, batch)

    decision_centers, widths, decision_edges = _decision_axis(rule, prior, spec)
    object_centers, object_edges = _object_axis(prior, spec)
    histogram = Histogram.empty(len(object_centers), len(decision_centers))
    for start, stop in batch.chunk_bounds:
        histogram = histogram.merge(
            accumulate(
                decisions[start:stop],
                batch.objects[start:stop],
                weights[start:stop],
                (decision_centers, decision_edges),
                (object_centers, object_edges),
            )
        )
    return build_grid(
        histogram,
        (decision_centers, widths, decision_edges),
        (object_centers, object_edges),
        prior,
    )


def build_grid(
    histogram: Histogram,
    decision_axis: Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]],
    object_axis: Tuple[np.ndarray, Optional[np.ndarray]],
    prior: Prior,
) -> PerformanceGrid:
    """Normalise a merged histogram into a performance grid."""
    decision_centers, widths, decision_edges = decision_axis
    object_centers, object_edges = object_axis
    row_totals = histogram.weights.sum(axis=1)
    empty = (histogram.counts == 0) | (row_totals <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = histogram.weights / (row_totals[:, None] * widths[None, :])
        effective = np.where(empty, 0.0, row_totals**2 / histogram.squared_weights)
    values[empty] = np.nan

    if histogram.dropped:
        logger.warning(f"Dropped {histogram.dropped} samples outside the grid window")
    if np.any(empty):
        masses = _row_prior_mass(prior, object_centers, object_edges)
        missing = float(np.sum(masses[empty]))
        if missing > 0:
            logger.warning(
                f"{int(np.sum(empty))} grid rows have no samples but carry prior mass {missing:.3e}"
            )

    total = int(histogram.counts.sum()) + histogram.dropped
    logger.info(
        f"Built {len(object_centers)}x{len(decision_centers)} performance grid from {total} samples"
    )
    return PerformanceGrid(
        decision_centers=decision_centers,
        decision_widths=widths,
        object_centers=object_centers,
        values=values,
        counts=histogram.counts,
        effective_counts=effective,
        empty_rows=empty,
        decision_edges=decision_edges,
        object_edges=object_edges,
        dropped=histogram.dropped,
        total=total,
        max_decision=histogram.max_decision,
        min_decision=histogram.min_decision,
    )


# ---------------------------------------------------------------------------
# Risk
# ---------------------------------------------------------------------------

def _check_confidence(confidence: float) -> None:
    if not 0.0 < confidence < 1.0:
        raise InputDomainError(f"Confidence level must lie in (0, 1), got {confidence}")


def clt_half_width(values: np.ndarray, confidence: float) -> float:
    """sqrt(2/L) * s * erfinv(R) with s the sample standard deviation."""
    size = len(values)
    if size < 2:
        return 0.0
    spread = float(np.std(values, ddof=1))
    return math.sqrt(2.0 / size) * spread * float(special.erfinv(confidence))


def estimate_risk(
    rule: Rule,
    batch: SampleBatch,
    cost: Optional[CostFunction] = None,
    confidence: float = 0.95,
    method: str = CLT_EMPIRICAL,
    decisions: Optional[np.ndarray] = None,
    scenario: Optional[Scenario] = None,
) -> RiskEstimate:
    """
    Bayes risk B_L(W) = (1/L) sum_l w_l W(fuse(a_l) - h_l) with a confidence interval.

    Args:
        rule: Fusion rule to evaluate
        batch: Samples from the proposal
        cost: Cost function (the scenario's when None)
        confidence: Confidence level R in (0, 1)
        method: "clt-empirical" or "theorem4-bound"
        decisions: Precomputed fuse(a_l) for the batch
        scenario: Scenario of the samples (the rule's when None)

    Returns:
        RiskEstimate

    Raises:
        UnsupportedConfigurationError: theorem4-bound on a scenario without the
            even-cost optimality tag
    """
    _check_confidence(confidence)
    if method not in RISK_METHODS:
        raise InputDomainError(f"Unknown risk method '{method}', expected {RISK_METHODS}")
    scenario = scenario or getattr(rule, "scenario")
    cost = cost or scenario.cost
    if method == THEOREM4_BOUND and not scenario.even_cost_optimal:
        raise UnsupportedConfigurationError(
            f"The even-cost bound needs a scenario tagged even_cost_optimal; {scenario.name} is not"
        )
    if decisions is None:
        decisions = decide_in_chunks(rule.fuse_batch, batch)
    losses = batch.weights * cost(decisions - batch.objects)
    estimate = float(np.mean(losses))
    if method == CLT_EMPIRICAL:
        half_width = clt_half_width(losses, confidence)
    else:
        second = float(np.mean(batch.weights * cost(decisions - batch.objects) ** 2))
        half_width = (
            math.sqrt(2.0 / batch.size)
            * (math.sqrt(second) + estimate)
            * float(special.erfinv(confidence))
        )
    logger.info(
        f"Risk of {rule.label} rule on {scenario.name}: {estimate:.6g} +/- {half_width:.3g} "
        f"(L={batch.size}, R={confidence}, {method})"
    )
    return RiskEstimate(
        estimate=estimate,
        samples=batch.size,
        confidence=confidence,
        half_width=half_width,
        method=method,
    )


def compare_risks(
    rule: Rule,
    baseline: Any,
    batch: SampleBatch,
    cost: Optional[CostFunction] = None,
    confidence: float = 0.95,
    scenario: Optional[Scenario] = None,
) -> RiskComparison:
    """
    Paired estimate of risk(baseline) - risk(rule) over the same samples.

    ``baseline`` is a Rule or any callable mapping feature rows to decisions.
    A positive lower confidence limit means the rule beats the baseline.
    """
    _check_confidence(confidence)
    scenario = scenario or getattr(rule, "scenario")
    cost = cost or scenario.cost
    decide = baseline.fuse_batch if hasattr(baseline, "fuse_batch") else baseline
    rule_losses = batch.weights * cost(decide_in_chunks(rule.fuse_batch, batch) - batch.objects)
    baseline_losses = batch.weights * cost(decide_in_chunks(decide, batch) - batch.objects)
    differences = baseline_losses - rule_losses

    def summary(losses: np.ndarray) -> RiskEstimate:
        return RiskEstimate(
            estimate=float(np.mean(losses)),
            samples=batch.size,
            confidence=confidence,
            half_width=clt_half_width(losses, confidence),
        )

    return RiskComparison(
        difference=float(np.mean(differences)),
        half_width=clt_half_width(differences, confidence),
        confidence=confidence,
        samples=batch.size,
        rule=summary(rule_losses),
        baseline=summary(baseline_losses),
    )


def risk_from_grid(grid: PerformanceGrid, prior: Prior, cost: CostFunction) -> float:
    """
    Discretised double integral of W(c - h) d_{C|H}(c, h) d_H(h).

    Rows are weighted by their prior mass; the result is renormalised over the
    mass of populated rows, and missing mass (empty rows, or prior mass outside
    the object window) is logged.
    """
    masses = _row_prior_mass(prior, grid.object_centers, grid.object_edges)
    populated = ~grid.empty_rows
    if not np.any(populated):
        raise InputDomainError("Performance grid has no populated rows")
    losses = cost(grid.decision_centers[None, :] - grid.object_centers[:, None])
    row_risks = np.sum(
        np.nan_to_num(grid.values) * grid.decision_widths[None, :] * losses, axis=1
    )
    covered = float(np.sum(masses[populated]))
    missing = 1.0 - covered
    if missing > 1e-9:
        logger.warning(
            f"Grid risk renormalised over prior mass {covered:.6f}; missing mass {missing:.3e}"
        )
    return float(np.sum(masses[populated] * row_risks[populated]) / covered)
