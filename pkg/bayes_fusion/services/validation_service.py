"""
Oracle-versus-engine validation of the built-in scenarios.

Each built-in scenario has a closed form or a published value to compare the
Monte Carlo engine against. A report collects one ValidationCheck per
comparison; the run passes only when every check passes.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np
from django.conf import settings

from bayes_fusion.exceptions import InputDomainError
from bayes_fusion.models import (
    FusionTopology,
    GridSpec,
    PerformanceGrid,
    RiskEstimate,
    SampleBatch,
    Scenario,
    ValidationCheck,
    ValidationReport,
)
from bayes_fusion.services import analytic
from bayes_fusion.services.builtin_scenarios import (
    BUILTIN_SCENARIOS,
    FOURCLASS_HARD_RISK,
    FOURCLASS_PBPO_RISK,
    FOURCLASS_SOFT_RISK,
    MIXTURE_MAX_DECISION,
    builtin_scenario,
)
from bayes_fusion.services.fusion_service import (
    FusionRule,
    enumerate_joint,
    enumerate_pair_risks,
    enumerate_risk,
)
from bayes_fusion.services.montecarlo_service import (
    MonteCarloService,
    compare_risks,
    draw_chunk,
    estimate_performance,
    estimate_risk,
)
from bayes_fusion.services.network_service import build_pbpo, linear_gaussian_risk
from bayes_fusion.spaces import DecisionSpace

logger = logging.getLogger(__name__)

GAUSS_AGREEMENT_TOLERANCE = 1e-8
EXPO_AGREEMENT_TOLERANCE = 1e-6
FOURCLASS_TOLERANCE = 0.005
POISSON_TOLERANCE = 1e-12
PBPO_RISK_TOLERANCE = 1e-12
NORMALIZATION_TOLERANCE = 1e-9
CEILING_SLACK = 1e-9
AGREEMENT_POINTS = 1000
# Stream index reserved for agreement points, far above any sub-batch index
AGREEMENT_STREAM = 2**31 - 1


def _risk_check(
    name: str, estimate: RiskEstimate, oracle: float, detail: str = ""
) -> ValidationCheck:
    return ValidationCheck(
        name=name,
        oracle=oracle,
        estimate=estimate.estimate,
        passed=estimate.contains(oracle),
        tolerance=estimate.half_width,
        ci_low=estimate.ci_low,
        ci_high=estimate.ci_high,
        detail=detail or f"{estimate.confidence:.0%} CI must contain the oracle",
    )


def _agreement_check(
    name: str, engine: np.ndarray, oracle: np.ndarray, tolerance: float
) -> ValidationCheck:
    error = float(np.max(np.abs(engine - oracle)))
    return ValidationCheck(
        name=name,
        oracle=0.0,
        estimate=error,
        passed=error <= tolerance,
        tolerance=tolerance,
        detail=f"max |engine - closed form| over {len(engine)} points",
    )


def _builtin_key(name: str) -> str:
    key = name.split(":", 1)[1] if name.startswith("builtin:") else name
    if key not in BUILTIN_SCENARIOS:
        raise InputDomainError(
            f"Unknown built-in scenario '{key}', expected one of {sorted(BUILTIN_SCENARIOS)}"
        )
    return key


def _gauss_params(params: Mapping[str, str]) -> analytic.GaussianScenarioParams:
    if "bound" in params:
        raise InputDomainError("Gaussian closed forms hold for the unbounded scenario only")
    return analytic.GaussianScenarioParams(
        u=float(params.get("u", 1.0)), v=float(params.get("v", 1.0)), M=int(params.get("M", 2))
    )


class Validator:
    """Runs the checks of one built-in scenario against a shared sample batch."""

    def __init__(
        self,
        name: str,
        params: Mapping[str, str],
        samples: int,
        seed: int,
        confidence: float,
        service: Optional[MonteCarloService] = None,
    ):
        self.name = name
        self.params = dict(params)
        self.samples = samples
        self.seed = seed
        self.confidence = confidence
        self.service = service or MonteCarloService()
        self.scenario = builtin_scenario(name, self.params)

    def draw(self) -> SampleBatch:
        return self.service.draw(self.scenario, self.samples, "prior", self.seed)

    def agreement_features(self) -> np.ndarray:
        """Features drawn from the scenario itself on a stream no sub-batch uses."""
        chunk = draw_chunk(self.scenario, self.seed, AGREEMENT_STREAM, AGREEMENT_POINTS, "prior")
        return chunk.features

    # Gaussian

    def check_gauss(self) -> List[ValidationCheck]:
        scenario = self.scenario
        params = _gauss_params(self.params)
        rule = FusionRule(scenario)
        batch = self.draw()
        decisions = self.service.evaluate(rule, batch)
        checks = [
            _risk_check(
                "risk",
                estimate_risk(rule, batch, confidence=self.confidence, decisions=decisions),
                analytic.gauss_risk(params),
            )
        ]

        points = self.agreement_features()
        checks.append(
            _agreement_check(
                "fusion-rule-agreement",
                rule.soft_batch(points),
                analytic.gauss_fusion(params, points),
                GAUSS_AGREEMENT_TOLERANCE,
            )
        )

        def sample_mean(features: np.ndarray) -> np.ndarray:
            return np.sum(features, axis=1) / (params.M * params.u)

        comparison = compare_risks(rule, sample_mean, batch, confidence=self.confidence)
        checks.append(
            ValidationCheck(
                name="sample-mean-baseline",
                oracle=analytic.sample_mean_risk(params) - analytic.gauss_risk(params),
                estimate=comparison.difference,
                passed=comparison.difference > 0,
                ci_low=comparison.ci_low,
                ci_high=comparison.ci_high,
                detail="risk(sample mean) - risk(posterior mean) must be positive",
            )
        )

        if params.u == 1.0 and params.v == 1.0:
            checks.extend(self._check_gauss_pbpo(scenario, params, rule, points))
        return checks

    def _check_gauss_pbpo(
        self,
        scenario: Scenario,
        params: analytic.GaussianScenarioParams,
        rule: FusionRule,
        points: np.ndarray,
    ) -> List[ValidationCheck]:
        topology = FusionTopology.halves(params.M, DecisionSpace.real_line())
        closed = analytic.pbpo_gauss(params)
        composed = linear_gaussian_risk(scenario, topology)
        oracle = analytic.gauss_risk(params)
        composed_rule = build_pbpo(scenario, topology)
        return [
            ValidationCheck(
                name="pbpo-risk",
                oracle=oracle,
                estimate=closed.risk,
                passed=abs(closed.risk - oracle) <= PBPO_RISK_TOLERANCE
                and abs(composed - oracle) <= PBPO_RISK_TOLERANCE,
                tolerance=PBPO_RISK_TOLERANCE,
                detail="two-stage risk equals the centralized risk; "
                f"stage-composed value {composed!r}",
            ),
            _agreement_check(
                "pbpo-rule-agreement",
                composed_rule.soft_batch(points),
                rule.soft_batch(points),
                GAUSS_AGREEMENT_TOLERANCE,
            ),
        ]

    # Exponential

    def check_expo(self) -> List[ValidationCheck]:
        params = analytic.ExponentialScenarioParams(M=int(self.params.get("M", 1)))
        rule = FusionRule(self.scenario)
        batch = self.draw()
        decisions = self.service.evaluate(rule, batch)
        ceiling = params.M + 1.0
        above = int(np.sum(decisions > ceiling + CEILING_SLACK))
        points = self.agreement_features()
        return [
            _risk_check(
                "risk",
                estimate_risk(rule, batch, confidence=self.confidence, decisions=decisions),
                analytic.expo_risk(params),
            ),
            ValidationCheck(
                name="mass-above-ceiling",
                oracle=0.0,
                estimate=above / batch.size,
                passed=above == 0,
                tolerance=0.0,
                detail=f"fraction of decisions above M + 1 = {ceiling:g}",
            ),
            _agreement_check(
                "fusion-rule-agreement",
                rule.soft_batch(points),
                analytic.expo_fusion(params, points),
                EXPO_AGREEMENT_TOLERANCE,
            ),
        ]

    # Four classes

    def _check_published(self, published: float) -> List[ValidationCheck]:
        rule = build_pbpo(self.scenario)
        batch = self.draw()
        decisions = self.service.evaluate(rule, batch)
        risk = estimate_risk(
            rule, batch, confidence=self.confidence, decisions=decisions, scenario=self.scenario
        )
        return [
            ValidationCheck(
                name="risk",
                oracle=published,
                estimate=risk.estimate,
                passed=abs(risk.estimate - published) <= FOURCLASS_TOLERANCE,
                tolerance=FOURCLASS_TOLERANCE,
                ci_low=risk.ci_low,
                ci_high=risk.ci_high,
                detail="published value within the absolute tolerance",
            )
        ]

    def check_fourclass_hard(self) -> List[ValidationCheck]:
        return self._check_published(FOURCLASS_HARD_RISK)

    def check_fourclass_soft(self) -> List[ValidationCheck]:
        return self._check_published(FOURCLASS_SOFT_RISK)

    def check_fourclass_pbpo(self) -> List[ValidationCheck]:
        return self._check_published(FOURCLASS_PBPO_RISK)

    # Poisson

    def check_poisson_binary(self) -> List[ValidationCheck]:
        scenario = self.scenario
        rule = FusionRule(scenario)
        table = enumerate_joint(scenario)
        decisions = rule.fuse_batch(table.features)
        low = decisions == 1.0
        # P(C = 1 | H = h), summed over the fully enumerated low-decision pairs
        low_mass = table.likelihood[low].sum(axis=0)
        false_positive = 1.0 - float(low_mass[0])
        miss = float(low_mass[1])
        oracle = analytic.poisson_binary_rates()

        checks = [
            ValidationCheck(
                name="false-positive-rate",
                oracle=1.0 - 5.0 * math.exp(-2.0),
                estimate=false_positive,
                passed=abs(false_positive - (1.0 - 5.0 * math.exp(-2.0))) <= POISSON_TOLERANCE
                and abs(oracle.false_positive - false_positive) <= POISSON_TOLERANCE,
                tolerance=POISSON_TOLERANCE,
                detail="P(C = 2 | H = 1) by exact enumeration",
            ),
            ValidationCheck(
                name="miss-rate",
                oracle=13.0 * math.exp(-4.0),
                estimate=miss,
                passed=abs(miss - 13.0 * math.exp(-4.0)) <= POISSON_TOLERANCE
                and abs(oracle.miss - miss) <= POISSON_TOLERANCE,
                tolerance=POISSON_TOLERANCE,
                detail="P(C = 1 | H = 2) by exact enumeration",
            ),
        ]

        base = enumerate_pair_risks(table, decisions, scenario.cost)
        flipped = enumerate_pair_risks(table, np.where(low, 2.0, 1.0), scenario.cost)
        candidates = np.sum(table.features, axis=1) <= 2
        violations = int(np.sum(flipped[candidates] < base[candidates]))
        checks.append(
            ValidationCheck(
                name="single-flip-optimality",
                oracle=0.0,
                estimate=float(violations),
                passed=violations == 0 and bool(np.all(low == candidates)),
                tolerance=0.0,
                detail=f"flipping any of the {int(np.sum(candidates))} pairs with A + B <= 2 "
                "must not lower the risk",
            )
        )

        batch = self.draw()
        checks.append(
            _risk_check(
                "risk",
                estimate_risk(rule, batch, confidence=self.confidence),
                enumerate_risk(scenario, decisions=decisions, table=table),
            )
        )
        return checks

    # Mixture

    def check_mixture(self) -> List[ValidationCheck]:
        rule = FusionRule(self.scenario)
        batch = self.draw()
        decisions = self.service.evaluate(rule, batch)
        grid = estimate_performance(rule, batch, GridSpec(), decisions=decisions)
        report = grid.normalization_report()
        largest = float(np.max(decisions))
        return [
            ValidationCheck(
                name="max-decision",
                oracle=MIXTURE_MAX_DECISION,
                estimate=largest,
                passed=largest < MIXTURE_MAX_DECISION,
                detail="largest sampled decision stays below the ceiling",
            ),
            ValidationCheck(
                name="row-normalization",
                oracle=1.0,
                estimate=1.0 + report["max_row_integral_deviation"],
                passed=report["max_row_integral_deviation"] <= NORMALIZATION_TOLERANCE,
                tolerance=NORMALIZATION_TOLERANCE,
                detail=f"{report['populated_rows']} populated rows",
            ),
        ]

    def run(self) -> ValidationReport:
        handlers: Dict[str, Callable[[], List[ValidationCheck]]] = {
            "gauss": self.check_gauss,
            "expo": self.check_expo,
            "fourclass-hard": self.check_fourclass_hard,
            "fourclass-soft": self.check_fourclass_soft,
            "fourclass-pbpo": self.check_fourclass_pbpo,
            "poisson-binary": self.check_poisson_binary,
            "mixture": self.check_mixture,
        }
        report = ValidationReport(
            scenario=self.name,
            params=self.params,
            samples=self.samples,
            seed=self.seed,
            confidence=self.confidence,
            checks=handlers[self.name](),
        )
        for check in report.checks:
            log = logger.info if check.passed else logger.warning
            log(f"Validation {self.name}/{check.name}: {'pass' if check.passed else 'FAIL'}")
        return report


def run_validate(
    name: str,
    params: Optional[Mapping[str, str]] = None,
    samples: int = 1_000_000,
    seed: Optional[int] = None,
    confidence: Optional[float] = None,
    service: Optional[MonteCarloService] = None,
) -> ValidationReport:
    """
    Validate a built-in scenario against its oracles.

    Args:
        name: Built-in scenario name (with or without ``builtin:``)
        params: Raw scenario parameters
        samples: Monte Carlo sample count L
        seed: Master seed (settings.FUSION_DEFAULT_SEED when None)
        confidence: Confidence level (settings.FUSION_DEFAULT_CONFIDENCE when None)
        service: Monte Carlo service to draw with

    Returns:
        ValidationReport; ``passed`` is the conjunction of every check

    Raises:
        InputDomainError: Unknown scenario name or parameters
    """
    key = _builtin_key(name)
    validator = Validator(
        key,
        params or {},
        samples,
        seed if seed is not None else settings.FUSION_DEFAULT_SEED,
        confidence if confidence is not None else settings.FUSION_DEFAULT_CONFIDENCE,
        service,
    )
    report = validator.run()
    logger.info(
        f"Validated {key} with L={samples}: {'passed' if report.passed else 'failed'} "
        f"({sum(c.passed for c in report.checks)}/{len(report.checks)} checks)"
    )
    return report


def closed_forms(
    name: str, params: Optional[Mapping[str, str]] = None, at: Optional[List[float]] = None
) -> Dict[str, Any]:
    """
    Closed-form and published values of a built-in scenario.

    Args:
        name: Built-in scenario name
        params: Raw scenario parameters
        at: Optional joint feature vector at which to evaluate the closed-form rule

    Returns:
        Document of oracle values keyed by quantity
    """
    key = _builtin_key(name)
    params = dict(params or {})
    builtin_scenario(key, params)
    doc: Dict[str, Any] = {"scenario": key, "params": dict(sorted(params.items()))}
    if key == "gauss":
        gauss = _gauss_params(params)
        doc["risk"] = analytic.gauss_risk(gauss)
        doc["sample_mean_risk"] = analytic.sample_mean_risk(gauss)
        doc["rule_coefficient"] = gauss.u / (gauss.signal + gauss.v)
        doc["peak_slope"] = float(analytic.gauss_performance_peak(gauss, 1.0))
        if gauss.u == 1.0 and gauss.v == 1.0:
            doc["pbpo"] = analytic.pbpo_gauss(gauss).to_dict()
        if at is not None:
            doc["fusion"] = float(analytic.gauss_fusion(gauss, np.asarray(at, dtype=float)))
    elif key == "expo":
        expo = analytic.ExponentialScenarioParams(M=int(params.get("M", 1)))
        doc["risk"] = analytic.expo_risk(expo)
        doc["decision_ceiling"] = expo.M + 1.0
        if at is not None:
            doc["fusion"] = float(analytic.expo_fusion(expo, np.asarray(at, dtype=float)))
    elif key.startswith("fourclass-"):
        doc["published_risk"] = {
            "fourclass-hard": FOURCLASS_HARD_RISK,
            "fourclass-soft": FOURCLASS_SOFT_RISK,
            "fourclass-pbpo": FOURCLASS_PBPO_RISK,
        }[key]
    elif key == "poisson-binary":
        doc["rates"] = analytic.poisson_binary_rates().to_dict()
        doc["rates_closed_form"] = {
            "false_positive": 1.0 - 5.0 * math.exp(-2.0),
            "miss": 13.0 * math.exp(-4.0),
        }
    elif key == "mixture":
        doc["decision_ceiling"] = MIXTURE_MAX_DECISION
    if at is not None and "fusion" not in doc:
        raise InputDomainError(f"No closed-form rule for scenario {key}")
    return doc


def closed_form_grid(
    name: str, params: Optional[Mapping[str, str]] = None, spec: Optional[GridSpec] = None
) -> Optional[PerformanceGrid]:
    """Tabulated closed-form performance density, for the scenarios that have one."""
    key = _builtin_key(name)
    params = dict(params or {})
    spec = spec or GridSpec()
    if key == "gauss":
        gauss = _gauss_params(params)
        return analytic.tabulate_performance(
            lambda c, h: analytic.gauss_performance(gauss, c, h),
            spec.decision_range or (-4.0, 4.0),
            spec.object_range or (-4.0, 4.0),
            spec,
        )
    if key == "expo":
        expo = analytic.ExponentialScenarioParams(M=int(params.get("M", 1)))
        window = builtin_scenario(key, params).prior.default_window()
        return analytic.tabulate_performance(
            lambda c, h: analytic.expo_performance(expo, c, h),
            spec.decision_range or (0.0, expo.M + 1.0),
            spec.object_range or window,
            spec,
        )
    return None
