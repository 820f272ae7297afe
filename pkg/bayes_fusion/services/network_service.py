"""
Centralized and two-stage distributed (PBPO) fusion networks.

In a PBPO network every local center fuses its own group of sensors onto an
intermediate decision space K*, and the system center fuses the local outputs
onto K. Each center is Bayes optimal for its own inputs: the system center
treats the local outputs as derived sensors whose densities given H are

- Gaussian in closed form, for linear-Gaussian groups with K* = R under a
  standard normal prior;
- the group's own features (identity forwarding), for any other unbounded
  continuous K*;
- tabulated P(local output = k | H = h), for a discrete K* over a discrete I.

Every other combination is rejected with UnsupportedConfigurationError.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from bayes_fusion.distributions.priors import StandardNormalPrior
from bayes_fusion.distributions.quadrature import gauss_hermite
from bayes_fusion.distributions.sensors import (
    DiscreteOutputSensor,
    GaussianSensor,
    SensorModel,
)
from bayes_fusion.exceptions import InputDomainError, UnsupportedConfigurationError
from bayes_fusion.models import FusionTopology, Scenario
from bayes_fusion.services.fusion_service import (
    FusionRule,
    Rule,
    enumerate_joint,
    posterior_mean_batch,
    quantize_array,
)
from bayes_fusion.spaces import DecisionSpace

logger = logging.getLogger(__name__)

BREAKPOINT_GRID = 4097
TENSOR_NODES = 64
MAX_TENSOR_DIMS = 3
CDF_TAIL = 1e-15

IDENTITY = "identity"
LINEAR_GAUSSIAN = "linear-gaussian"
TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class Stage:
    """One local center: its sensors, its rule and how the system center sees it."""

    group: Tuple[int, ...]
    scenario: Scenario
    rule: FusionRule
    derivation: str
    derived: Tuple[SensorModel, ...]

    def outputs(self, features: np.ndarray, slices: Sequence[slice]) -> np.ndarray:
        """Stage-2 feature columns produced by this group for the given joint rows."""
        columns = np.concatenate([features[:, slices[i]] for i in self.group], axis=1)
        if self.derivation == IDENTITY:
            return columns
        return self.rule.fuse_batch(columns)[:, None]

    def describe(self) -> Dict[str, Any]:
        return {
            "group": list(self.group),
            "intermediate": self.scenario.decision_space.describe(),
            "derivation": self.derivation,
        }


class ComposedRule:
    """Two-stage rule: local centers per group, then the system center onto K."""

    label = "pbpo"

    def __init__(self, scenario: Scenario, stages: Sequence[Stage], system: FusionRule):
        self.scenario = scenario
        self.stages = tuple(stages)
        self.system = system
        self.decision_space = scenario.decision_space
        self._slices = scenario.block_slices

    def stage_features(self, features: Any) -> np.ndarray:
        rows = np.asarray(features, dtype=float)
        if rows.ndim == 1:
            rows = rows[None, :]
        return np.concatenate([stage.outputs(rows, self._slices) for stage in self.stages], axis=1)

    def soft_batch(self, features: Any) -> np.ndarray:
        return self.system.soft_batch(self.stage_features(features))

    def fuse_batch(self, features: Any) -> np.ndarray:
        return quantize_array(self.decision_space, self.soft_batch(features))

    def __call__(self, features: Any) -> np.ndarray:
        return self.fuse_batch(features)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "pbpo", "stages": [stage.describe() for stage in self.stages]}


# ---------------------------------------------------------------------------
# Derived stage-2 sensors
# ---------------------------------------------------------------------------

def linear_gaussian_group(
    sensors: Sequence[SensorModel],
) -> Optional[List[Tuple[float, float, float]]]:
    """(offset, slope, variance) per sensor when every sensor is scalar linear-Gaussian."""
    coefficients = []
    for sensor in sensors:
        if not isinstance(sensor, GaussianSensor):
            return None
        linear = sensor.linear_coefficients()
        if linear is None:
            return None
        coefficients.append(linear)
    return coefficients


def _linear_gaussian_output(coefficients: Sequence[Tuple[float, float, float]]) -> GaussianSensor:
    """Local posterior mean given H ~ N(S h / (1+S), S / (1+S)^2), S = sum u^2 / v."""
    signal = sum(slope**2 / variance for _, slope, variance in coefficients)
    return GaussianSensor.linear(
        slope=signal / (1.0 + signal), variance=signal / (1.0 + signal) ** 2
    )


def _tabulate_enumeration(sub: Scenario, rule: FusionRule, levels: np.ndarray) -> np.ndarray:
    table = enumerate_joint(sub)
    decisions = rule.fuse_batch(table.features)
    columns = np.searchsorted(levels, decisions)
    out = np.zeros((len(table.points), len(levels)))
    for k in range(len(levels)):
        out[:, k] = table.likelihood[columns == k].sum(axis=0)
    return out / out.sum(axis=1, keepdims=True)


def _feature_window(sensor: SensorModel, points: np.ndarray) -> Tuple[float, float]:
    """A window outside of which every conditional distribution has mass below CDF_TAIL."""
    lo, hi = -1.0, 1.0
    for _ in range(64):
        below = np.all(sensor.cdf(lo, points) < CDF_TAIL)
        if below and np.all(sensor.cdf(hi, points) > 1 - CDF_TAIL):
            return lo, hi
        lo, hi = 2.0 * lo, 2.0 * hi
    raise UnsupportedConfigurationError(
        f"Cannot bracket the feature range of a {sensor.family} sensor"
    )


def _tabulate_breakpoints(
    sub: Scenario, rule: FusionRule, levels: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """
    Exact P(output = k | h) for one scalar sensor from its distribution function.

    Decision changes are located on a fine grid and refined with Brent's method on
    the posterior mean minus the quantization threshold between the two decisions.
    """
    sensor = sub.sensors[0]
    lo, hi = _feature_window(sensor, points)
    grid = np.linspace(lo, hi, BREAKPOINT_GRID)
    decisions = rule.fuse_batch(grid[:, None])
    changes = np.flatnonzero(decisions[1:] != decisions[:-1])

    def soft(x: float) -> float:
        return float(posterior_mean_batch(sub, np.array([[x]]))[0])

    breakpoints = []
    for index in changes:
        threshold = 0.5 * (decisions[index] + decisions[index + 1])
        x0, x1 = grid[index], grid[index + 1]
        if (soft(x0) - threshold) * (soft(x1) - threshold) > 0:
            breakpoints.append(0.5 * (x0 + x1))
            continue
        breakpoints.append(optimize.brentq(lambda x: soft(x) - threshold, x0, x1, xtol=1e-13))

    bounds = np.concatenate(([-math.inf], breakpoints, [math.inf]))
    segment_levels = np.concatenate(([decisions[0]], decisions[changes + 1]))
    out = np.zeros((len(points), len(levels)))
    for left, right, level in zip(bounds[:-1], bounds[1:], segment_levels):
        upper = np.ones(len(points)) if math.isinf(right) else sensor.cdf(right, points)
        lower = np.zeros(len(points)) if math.isinf(left) else sensor.cdf(left, points)
        out[:, int(np.searchsorted(levels, level))] += upper - lower
    return out


def _tabulate_tensor(
    sub: Scenario, rule: FusionRule, levels: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """P(output = k | h) for Gaussian groups of up to three dimensions by tensor Gauss-Hermite."""
    dims = sub.total_dims
    nodes, weights = gauss_hermite(TENSOR_NODES)
    grids = np.meshgrid(*([nodes] * dims), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack(np.meshgrid(*([weights] * dims), indexing="ij")).reshape(dims, -1), axis=0)
    out = np.zeros((len(points), len(levels)))
    for i, h in enumerate(points):
        blocks = []
        offset = 0
        for sensor in sub.sensors:
            assert isinstance(sensor, GaussianSensor)
            n = sensor.dims
            mean = np.asarray(sensor.mean(h), dtype=float)
            factor = np.asarray(sensor.factor(h), dtype=float)
            blocks.append(mean + z[:, offset:offset + n] @ factor.T)
            offset += n
        decisions = rule.fuse_batch(np.concatenate(blocks, axis=1))
        out[i] = np.bincount(np.searchsorted(levels, decisions), weights=w, minlength=len(levels))
    return out / out.sum(axis=1, keepdims=True)


def tabulate_outputs(sub: Scenario, rule: FusionRule) -> DiscreteOutputSensor:
    """
    Derived sensor for a local center with a discrete K* over a discrete I.

    Raises:
        UnsupportedConfigurationError: If no tabulation method fits the group
    """
    levels = sub.decision_space.point_array
    points = sub.object_space.point_array
    sensors = sub.sensors
    if all(sensor.is_discrete and sensor.dims == 1 for sensor in sensors):
        table = _tabulate_enumeration(sub, rule, levels)
    elif len(sensors) == 1 and sensors[0].has_cdf:
        table = _tabulate_breakpoints(sub, rule, levels, points)
    elif all(isinstance(s, GaussianSensor) for s in sensors) and sub.total_dims <= MAX_TENSOR_DIMS:
        table = _tabulate_tensor(sub, rule, levels, points)
    else:
        raise UnsupportedConfigurationError(
            f"No stage-2 tabulation for group of {[s.family for s in sensors]} sensors"
        )
    return DiscreteOutputSensor(levels, points, table)


def _derive(
    scenario: Scenario, sub: Scenario, rule: FusionRule
) -> Tuple[str, Tuple[SensorModel, ...]]:
    intermediate = sub.decision_space
    if intermediate.is_discrete:
        if not scenario.object_space.is_discrete:
            raise UnsupportedConfigurationError(
                "Discrete intermediate decision spaces need a discrete object space"
            )
        return TABULATED, (tabulate_outputs(sub, rule),)
    if intermediate.kind != "interval" or intermediate.is_bounded:
        raise UnsupportedConfigurationError(
            f"No stage-2 density for a bounded continuous intermediate space "
            f"{intermediate.describe()}"
        )
    coefficients = linear_gaussian_group(sub.sensors)
    if (
        intermediate.is_real_line
        and coefficients is not None
        and isinstance(scenario.prior, StandardNormalPrior)
    ):
        return LINEAR_GAUSSIAN, (_linear_gaussian_output(coefficients),)
    return IDENTITY, sub.sensors


def build_pbpo(scenario: Scenario, topology: Optional[FusionTopology] = None) -> Rule:
    """
    Compose the fusion rule of a network.

    Args:
        scenario: Scenario with every sensor of the network
        topology: Network shape (the scenario's own, else centralized, when None)

    Returns:
        FusionRule for a centralized topology, ComposedRule otherwise

    Raises:
        UnsupportedConfigurationError: If a stage-2 density is unavailable
    """
    topology = topology or scenario.topology or FusionTopology.centralized()
    if topology.is_centralized:
        return FusionRule(scenario)
    topology.validate(scenario.sensor_count)

    stages = []
    derived: List[SensorModel] = []
    for index, (group, intermediate) in enumerate(zip(topology.groups, topology.intermediate)):
        sub = scenario.replace(
            sensors=tuple(scenario.sensors[i] for i in group),
            decision_space=intermediate,
            name=f"{scenario.name}/local-{index}",
            topology=None,
        )
        rule = FusionRule(sub)
        derivation, sensors = _derive(scenario, sub, rule)
        stages.append(Stage(tuple(group), sub, rule, derivation, sensors))
        derived.extend(sensors)
        logger.info(f"Local center {index} of {scenario.name} uses {derivation} stage-2 densities")

    system_scenario = scenario.replace(
        sensors=tuple(derived), name=f"{scenario.name}/system", topology=None
    )
    return ComposedRule(scenario, stages, FusionRule(system_scenario))


def linear_gaussian_risk(scenario: Scenario, topology: Optional[FusionTopology] = None) -> float:
    """
    Closed-form squared-error risk of the centralized or two-stage rule.

    Needs a standard normal prior, K = R, scalar linear-Gaussian sensors and, for
    PBPO, K* = R for every group. Every rule involved is then linear in the
    features, and the risk of C = sum alpha_m (A_m - o_m) is
    (sum alpha u - 1)^2 + sum alpha^2 v.
    """
    if not isinstance(scenario.prior, StandardNormalPrior):
        raise UnsupportedConfigurationError("Linear-Gaussian risk needs a standard normal prior")
    if not scenario.decision_space.is_real_line:
        raise UnsupportedConfigurationError("Linear-Gaussian risk needs K = R")
    coefficients = linear_gaussian_group(scenario.sensors)
    if coefficients is None:
        raise UnsupportedConfigurationError(
            "Linear-Gaussian risk needs scalar linear-Gaussian sensors"
        )
    slopes = np.array([slope for _, slope, _ in coefficients])
    variances = np.array([variance for _, _, variance in coefficients])

    topology = topology or scenario.topology or FusionTopology.centralized()
    if topology.is_centralized:
        groups: Tuple[Tuple[int, ...], ...] = (tuple(range(scenario.sensor_count)),)
    else:
        topology.validate(scenario.sensor_count)
        if not all(space.is_real_line for space in topology.intermediate):
            raise UnsupportedConfigurationError("Linear-Gaussian risk needs K* = R for every group")
        groups = topology.groups

    alpha = np.zeros(scenario.sensor_count)
    group_signals = []
    for group in groups:
        index = np.asarray(group)
        signal = float(np.sum(slopes[index] ** 2 / variances[index]))
        group_signals.append(signal)
        alpha[index] = slopes[index] / (variances[index] * (1.0 + signal))
    if len(groups) > 1:
        # system center on outputs Y_g ~ N(s_g h, t_g) with s_g = S_g/(1+S_g), t_g = S_g/(1+S_g)^2
        s = np.array([g / (1.0 + g) for g in group_signals])
        t = np.array([g / (1.0 + g) ** 2 for g in group_signals])
        system_signal = float(np.sum(s**2 / t))
        beta = s / (t * (1.0 + system_signal))
        for weight, group in zip(beta, groups):
            alpha[np.asarray(group)] *= weight
    bias = float(np.dot(alpha, slopes)) - 1.0
    return bias**2 + float(np.dot(alpha**2, variances))


def intermediate_for(
    kind: str, object_space_points: Optional[Sequence[float]] = None
) -> DecisionSpace:
    """Intermediate space by name: 'real' for K* = R, 'discrete' for K* = I's points."""
    if kind == "real":
        return DecisionSpace.real_line()
    if kind == "discrete":
        if object_space_points is None:
            raise InputDomainError("A discrete intermediate space needs object points")
        return DecisionSpace.discrete(object_space_points)
    raise InputDomainError(f"Unknown intermediate space '{kind}', expected 'real' or 'discrete'")
