"""
Scenario files and scenario references.

A scenario reference is either ``builtin:<name>`` or the path of a JSON
scenario document (layout in docs/SCENARIO_FORMAT.md). Numbers anywhere in
the document may be written as the strings "inf" and "-inf".
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from bayes_fusion.distributions.params import Affine, Constant, Power, Table
from bayes_fusion.distributions.priors import (
    DiscretePrior,
    ExponentialPrior,
    Prior,
    StandardNormalPrior,
    TabulatedPrior,
    TruncatedNormalPrior,
)
from bayes_fusion.distributions.quadrature import QuadratureRule
from bayes_fusion.distributions.sensors import (
    ExponentialSensor,
    GaussianSensor,
    MixtureSensor,
    PoissonSensor,
    RestrictedSensor,
    SensorModel,
    UniformSensor,
    exponential_uniform_mixture,
    narrow_wide_gaussian_mixture,
)
from bayes_fusion.exceptions import FusionEngineException, ScenarioFileError
from bayes_fusion.models import FusionTopology, Scenario
from bayes_fusion.services.builtin_scenarios import builtin_scenario, is_builtin
from bayes_fusion.services.network_service import intermediate_for
from bayes_fusion.spaces import CostFunction, DecisionSpace, ObjectSpace

logger = logging.getLogger(__name__)

SCENARIO_KEYS = {
    "name",
    "object_space",
    "prior",
    "sensors",
    "decision_space",
    "cost",
    "even_cost_optimal",
    "topology",
}
REQUIRED_KEYS = {"object_space", "prior", "sensors", "decision_space"}


def _number(value: Any) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf"):
            return math.inf
        if text == "-inf":
            return -math.inf
        raise ScenarioFileError(f"Expected a number or 'inf'/'-inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFileError(f"Expected a number, got {value!r}")
    return float(value)


def _numbers(value: Any) -> Any:
    """Numbers, or nested lists of numbers, with 'inf' strings resolved."""
    if isinstance(value, list):
        return [_numbers(item) for item in value]
    return _number(value)


def _require(doc: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in doc:
        raise ScenarioFileError(f"{where} is missing '{key}'")
    return doc[key]


# Spaces

def parse_object_space(doc: Mapping[str, Any]) -> ObjectSpace:
    if "points" in doc:
        return ObjectSpace.discrete(_numbers(doc["points"]))
    lo, hi = _numbers(_require(doc, "interval", "object_space"))
    return ObjectSpace.interval(lo, hi)


def parse_decision_space(doc: Mapping[str, Any]) -> DecisionSpace:
    if "points" in doc:
        return DecisionSpace.discrete(_numbers(doc["points"]))
    if "union" in doc:
        return DecisionSpace.union(_numbers(doc["union"]))
    lo, hi = _numbers(_require(doc, "interval", "decision_space"))
    return DecisionSpace.interval(lo, hi)


def parse_cost(value: Any) -> CostFunction:
    if value is None:
        return CostFunction.squared_error()
    if isinstance(value, str):
        return CostFunction.parse(value)
    if isinstance(value, Mapping) and "polynomial" in value:
        try:
            terms = {int(power): _number(c) for power, c in value["polynomial"].items()}
        except (AttributeError, ValueError) as e:
            raise ScenarioFileError(f"Polynomial cost needs {{power: coefficient}}: {e}") from e
        return CostFunction.polynomial(terms)
    raise ScenarioFileError(f"Cannot read cost {value!r}")


# Parameters and densities

def parse_param(value: Any) -> Any:
    """A number, a list (constant) or a {"form": ...} parameter function of h."""
    if not isinstance(value, Mapping):
        return _numbers(value)
    form = _require(value, "form", "parameter")
    if form == "constant":
        return Constant(_numbers(_require(value, "value", "constant parameter")))
    if form == "affine":
        return Affine(
            _numbers(value.get("offset", 0.0)),
            _numbers(_require(value, "slope", "affine parameter")),
        )
    if form == "power":
        return Power(
            _numbers(_require(value, "scale", "power parameter")),
            _number(_require(value, "exponent", "power parameter")),
        )
    if form == "table":
        return Table(
            _numbers(_require(value, "points", "table parameter")),
            _numbers(_require(value, "values", "table parameter")),
        )
    raise ScenarioFileError(f"Unknown parameter form '{form}'")


def parse_quadrature(doc: Optional[Mapping[str, Any]]) -> Optional[QuadratureRule]:
    if doc is None:
        return None
    span = doc.get("span")
    return QuadratureRule(
        kind=_require(doc, "kind", "quadrature"),
        nodes=int(_require(doc, "nodes", "quadrature")),
        span=tuple(_numbers(span)) if span is not None else None,
        knee=float(doc["knee"]) if "knee" in doc else None,
    )


def parse_prior(doc: Mapping[str, Any], space: ObjectSpace) -> Prior:
    form = _require(doc, "form", "prior")
    rule = parse_quadrature(doc.get("quadrature"))
    if form == "discrete":
        if not space.is_discrete:
            raise ScenarioFileError("A discrete prior needs a discrete object space")
        points = space.point_array
        if "weights" not in doc:
            return DiscretePrior.uniform(points)
        return DiscretePrior(points, _numbers(doc["weights"]))
    if form == "standard-normal":
        return StandardNormalPrior(rule)
    if form == "exponential":
        return ExponentialPrior(_number(doc.get("rate", 1.0)), rule)
    if form == "truncated-normal":
        return TruncatedNormalPrior(
            space.lo,
            space.hi,
            mean=_number(doc.get("mean", 0.0)),
            std=_number(doc.get("std", 1.0)),
            rule=rule,
        )
    if form == "tabulated":
        return TabulatedPrior(
            _numbers(_require(doc, "x", "tabulated prior")),
            _numbers(_require(doc, "density", "tabulated prior")),
            rule,
        )
    raise ScenarioFileError(f"Unknown prior form '{form}'")


def _range_bounds(value: Any) -> Tuple[float, float]:
    bounds = _numbers(value)
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise ScenarioFileError(f"A sensor range needs exactly [lo, hi], got {value!r}")
    return bounds[0], bounds[1]


def _feature_range(doc: Mapping[str, Any]) -> Optional[Tuple[float, float]]:
    return _range_bounds(doc["range"]) if "range" in doc else None


def parse_sensor(doc: Mapping[str, Any]) -> SensorModel:
    family = _require(doc, "family", "sensor")
    if family == "gaussian":
        mean = parse_param(doc.get("mean", 0.0))
        if "covariance" in doc:
            return GaussianSensor.from_covariance(mean, _numbers(doc["covariance"]))
        if "factor" in doc:
            return GaussianSensor(mean, parse_param(doc["factor"]))
        if "variance" in doc:
            return GaussianSensor.scalar(mean, variance=_number(doc["variance"]))
        return GaussianSensor.scalar(mean, std=parse_param(_require(doc, "std", "gaussian sensor")))
    if family == "exponential":
        return ExponentialSensor(parse_param(doc["rate"]) if "rate" in doc else None)
    if family == "poisson":
        return PoissonSensor(parse_param(doc["rate"]) if "rate" in doc else None)
    if family == "uniform":
        return UniformSensor(
            parse_param(_require(doc, "lo", "uniform sensor")),
            parse_param(_require(doc, "hi", "uniform sensor")),
        )
    if family == "exponential-uniform-mixture":
        return exponential_uniform_mixture(_feature_range(doc))
    if family == "narrow-wide-gaussian-mixture":
        return narrow_wide_gaussian_mixture(_feature_range(doc))
    if family == "mixture":
        components = [parse_sensor(item) for item in _require(doc, "components", "mixture")]
        return MixtureSensor(components, _numbers(_require(doc, "weights", "mixture")))
    if family == "restricted":
        lo, hi = _range_bounds(_require(doc, "range", "restricted sensor"))
        return RestrictedSensor(parse_sensor(_require(doc, "sensor", "restricted sensor")), lo, hi)
    raise ScenarioFileError(f"Unknown sensor family '{family}'")


# Topology

def _parse_groups(text: str, sensor_count: int) -> List[List[int]]:
    if text == "halves":
        half = sensor_count // 2
        return [list(range(half)), list(range(half, sensor_count))]
    try:
        return [[int(i) for i in group.split(",")] for group in text.split("/")]
    except ValueError as e:
        raise ScenarioFileError(f"Cannot read topology groups '{text}': {e}") from e


def parse_topology(spec: Any, scenario: Scenario) -> FusionTopology:
    """
    Read a topology from a ``--topology`` string or a scenario-file object.

    Strings: ``centralized``; ``pbpo`` (the scenario's own network, else two
    halves with K* = R); ``pbpo:<groups>:<real|discrete>`` where groups is
    ``halves`` or index lists such as ``0,1/2,3``.
    """
    points = scenario.object_space.point_array if scenario.object_space.is_discrete else None
    if isinstance(spec, Mapping):
        kind = spec.get("kind", "centralized")
        if kind == "centralized":
            return FusionTopology.centralized()
        groups = _require(spec, "groups", "topology")
        spaces = _require(spec, "intermediate", "topology")
        intermediate = [parse_decision_space(item) for item in spaces]
        return FusionTopology.pbpo(groups, intermediate)
    if not isinstance(spec, str):
        raise ScenarioFileError(f"Cannot read topology {spec!r}")
    parts = spec.strip().split(":")
    if parts[0] == "centralized" and len(parts) == 1:
        return FusionTopology.centralized()
    if parts[0] != "pbpo" or len(parts) not in (1, 3):
        raise ScenarioFileError(
            "Topology must be 'centralized', 'pbpo' or 'pbpo:<groups>:<real|discrete>', "
            f"got {spec!r}"
        )
    if len(parts) == 1:
        if scenario.topology is not None and not scenario.topology.is_centralized:
            return scenario.topology
        return FusionTopology.halves(scenario.sensor_count, DecisionSpace.real_line())
    groups = _parse_groups(parts[1], scenario.sensor_count)
    intermediate = intermediate_for(parts[2], points)
    return FusionTopology.pbpo(groups, [intermediate] * len(groups))


# Documents

def scenario_from_dict(doc: Mapping[str, Any], default_name: str = "custom") -> Scenario:
    """
    Build a Scenario from a parsed scenario document.

    Raises:
        ScenarioFileError: Missing or unknown keys, or values that violate an
            invariant of the engine's types
    """
    if not isinstance(doc, Mapping):
        raise ScenarioFileError("Scenario document must be a JSON object")
    missing = REQUIRED_KEYS - set(doc)
    if missing:
        raise ScenarioFileError(f"Scenario is missing keys: {sorted(missing)}")
    unknown = set(doc) - SCENARIO_KEYS
    if unknown:
        raise ScenarioFileError(f"Scenario has unknown keys: {sorted(unknown)}")
    sensors_doc = doc["sensors"]
    if not isinstance(sensors_doc, list):
        raise ScenarioFileError("'sensors' must be a list")
    try:
        object_space = parse_object_space(doc["object_space"])
        scenario = Scenario(
            object_space=object_space,
            prior=parse_prior(doc["prior"], object_space),
            sensors=tuple(parse_sensor(item) for item in sensors_doc),
            decision_space=parse_decision_space(doc["decision_space"]),
            cost=parse_cost(doc.get("cost")),
            name=str(doc.get("name", default_name)),
            even_cost_optimal=bool(doc.get("even_cost_optimal", False)),
        )
        if doc.get("topology") is not None:
            scenario = scenario.replace(topology=parse_topology(doc["topology"], scenario))
    except ScenarioFileError:
        raise
    except (FusionEngineException, TypeError, ValueError) as e:
        raise ScenarioFileError(f"Invalid scenario: {e}") from e
    return scenario


def load_scenario(path: Path) -> Scenario:
    """Read and build a scenario file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read scenario file {path}: {e}")
        raise ScenarioFileError(f"Cannot read scenario file {path}: {e}") from e
    scenario = scenario_from_dict(doc, default_name=path.stem)
    logger.info(f"Loaded scenario {scenario.name} from {path}")
    return scenario


def resolve_scenario(reference: str, params: Optional[Dict[str, str]] = None) -> Scenario:
    """
    Scenario for a ``--scenario`` value: ``builtin:<name>`` or a file path.

    Raises:
        ScenarioFileError: If parameters are given for a scenario file
    """
    if is_builtin(reference):
        return builtin_scenario(reference, params)
    if params:
        raise ScenarioFileError("--param applies to built-in scenarios only")
    return load_scenario(Path(reference))


def apply_topology(scenario: Scenario, spec: Optional[str]) -> Scenario:
    """Scenario with the ``--topology`` override applied (unchanged when None)."""
    if spec is None:
        return scenario
    return scenario.replace(topology=parse_topology(spec, scenario))
