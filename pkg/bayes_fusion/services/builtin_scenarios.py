"""
Built-in named scenarios.

The worked examples are generated here from their parameter tables rather
than stored as files, so the acceptance tests and the ``validate`` command
share a single definition. Parameters arrive as ``key=value`` strings from
``--param`` and are converted per scenario.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple

from bayes_fusion.distributions.params import Affine, Table
from bayes_fusion.distributions.priors import (
    EXPONENTIAL_LOG_STEP,
    DiscretePrior,
    ExponentialPrior,
    StandardNormalPrior,
    TruncatedNormalPrior,
)
from bayes_fusion.distributions.quadrature import (
    GAUSS_HERMITE,
    GAUSS_LEGENDRE,
    LOG_TRAPEZOID,
    TRAPEZOID,
    QuadratureRule,
    log_trapezoid_size,
)
from bayes_fusion.distributions.sensors import (
    ExponentialSensor,
    GaussianSensor,
    PoissonSensor,
    exponential_uniform_mixture,
    narrow_wide_gaussian_mixture,
)
from bayes_fusion.exceptions import InputDomainError
from bayes_fusion.models import FusionTopology, Scenario
from bayes_fusion.spaces import DecisionSpace, ObjectSpace

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"

# Posterior widths below this get a fine trapezoid rule instead of 64-node Hermite
HERMITE_MIN_POSTERIOR_SD = 0.4
TRAPEZOID_HALF_SPAN = 8.5

FOURCLASS_POINTS = (0.0, 1.0, 2.0, 3.0)
# Class-conditional standard deviations of the two sensors
FOURCLASS_STD_A = (1.7, 0.4, 3.0, 1.0)
FOURCLASS_STD_B = (0.5, 2.0, 0.7, 2.0)

FOURCLASS_HARD_RISK = 0.43775
FOURCLASS_SOFT_RISK = 0.35536
FOURCLASS_PBPO_RISK = 0.57862

EXPO_LOG_SPREAD = 0.5

MIXTURE_RANGE = (0.0, 4.0)
MIXTURE_FEATURE_RANGE = (0.0, 5.0)
MIXTURE_MAX_DECISION = 2.6
# Log-spaced nodes from 1e-12 up to the knee, then about 0.01 apart up to 4
MIXTURE_SMALLEST_NODE = 1e-12
MIXTURE_KNEE = 0.05
MIXTURE_STEP = 0.2


def parse_params(pairs: Optional[Iterable[str]]) -> Dict[str, str]:
    """
    Turn repeated ``key=value`` arguments into a dict.

    Raises:
        InputDomainError: If an item has no '=' or a key repeats
    """
    params: Dict[str, str] = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InputDomainError(f"Scenario parameter '{pair}' must look like key=value")
        if key in params:
            raise InputDomainError(f"Scenario parameter '{key}' given twice")
        params[key] = value.strip()
    return params


def _convert(name: str, key: str, raw: str, kind: Callable[[str], object]) -> object:
    try:
        return kind(raw)
    except ValueError as e:
        raise InputDomainError(f"Parameter {key}={raw!r} of scenario {name} is invalid: {e}") from e


def posterior_sd(u: float, v: float, sensors: int) -> float:
    """Posterior standard deviation of H in the Gaussian scenario."""
    return 1.0 / math.sqrt(sensors * u * u / v + 1.0)


def gauss_quadrature(
    u: float, v: float, sensors: int, bound: Optional[float], nodes: Optional[int]
) -> Optional[QuadratureRule]:
    """
    Fixed quadrature for the Gaussian scenario.

    64-node Hermite while the posterior is wide; as M grows the posterior
    narrows like (M + 1)^-1/2 and a trapezoid rule with spacing close to the
    posterior width takes over. Bounded variants use Legendre on [-b, b].
    """
    sd = posterior_sd(u, v, sensors)
    if bound is not None:
        count = nodes or max(128, math.ceil(math.pi * bound / sd))
        return QuadratureRule(GAUSS_LEGENDRE, count, (-bound, bound))
    if sd >= HERMITE_MIN_POSTERIOR_SD:
        return QuadratureRule(GAUSS_HERMITE, nodes) if nodes else None
    count = nodes or math.ceil(2.0 * TRAPEZOID_HALF_SPAN / sd) + 1
    return QuadratureRule(TRAPEZOID, count, (-TRAPEZOID_HALF_SPAN, TRAPEZOID_HALF_SPAN))


def gauss(
    u: float = 1.0,
    v: float = 1.0,
    M: int = 2,
    bound: Optional[float] = None,
    nodes: Optional[int] = None,
) -> Scenario:
    """
    H ~ N(0, 1) observed by M sensors A_m ~ N(u H, v).

    With ``bound`` the prior is truncated to [-b, b] and K = [-b, b], which
    makes the uniform proposal available. Even M gets a default two-stage
    topology (halves, K* = R) used by ``--topology pbpo``.
    """
    if M < 1:
        raise InputDomainError(f"M must be at least 1, got {M}")
    if not v > 0:
        raise InputDomainError(f"Variance v must be positive, got {v}")
    if bound is not None and not bound > 0:
        raise InputDomainError(f"Bound must be positive, got {bound}")
    rule = gauss_quadrature(u, v, M, bound, nodes)
    if bound is None:
        prior = StandardNormalPrior(rule)
        decisions = DecisionSpace.real_line()
    else:
        prior = TruncatedNormalPrior(-bound, bound, rule=rule)
        decisions = DecisionSpace.interval(-bound, bound)
    topology = (
        FusionTopology.halves(M, DecisionSpace.real_line())
        if M % 2 == 0 and bound is None
        else None
    )
    return Scenario(
        object_space=prior.space,
        prior=prior,
        sensors=tuple(GaussianSensor.linear(u, v) for _ in range(M)),
        decision_space=decisions,
        name="gauss",
        even_cost_optimal=bound is None,
        topology=topology,
    )


def expo(M: int = 1) -> Scenario:
    """
    H ~ exponential(1) observed by M sensors A_m ~ exponential(rate H); K = [0, inf).

    The posterior of log H has width about (M + 1)^-1/2, and the log-h node
    spacing is kept below half of it.
    """
    if M < 1:
        raise InputDomainError(f"M must be at least 1, got {M}")
    step = min(EXPONENTIAL_LOG_STEP, EXPO_LOG_SPREAD / math.sqrt(M + 1))
    prior = ExponentialPrior(1.0, ExponentialPrior.default_rule(1.0, step))
    return Scenario(
        object_space=prior.space,
        prior=prior,
        sensors=tuple(ExponentialSensor() for _ in range(M)),
        decision_space=DecisionSpace.interval(0.0, math.inf),
        name="expo",
    )


def _fourclass_sensor(stds: Tuple[float, ...]) -> GaussianSensor:
    return GaussianSensor.scalar(Affine(0.0, 1.0), std=Table(FOURCLASS_POINTS, stds))


def fourclass(variant: str) -> Scenario:
    """
    Four equiprobable classes {0, 1, 2, 3}, two Gaussian sensors with mean h and
    class-dependent standard deviations.

    ``hard`` decides within I, ``soft`` within [0, 3]. ``pbpo`` routes each
    sensor through its own local center with K* = I and fuses the two local
    classes into a class again, so K = I there too.
    """
    prior = DiscretePrior.uniform(FOURCLASS_POINTS)
    topology = None
    if variant in ("hard", "pbpo"):
        decisions = DecisionSpace.discrete(FOURCLASS_POINTS)
    elif variant == "soft":
        decisions = DecisionSpace.interval(0.0, 3.0)
    else:
        raise InputDomainError(f"Unknown four-class variant '{variant}'")
    if variant == "pbpo":
        local = DecisionSpace.discrete(FOURCLASS_POINTS)
        topology = FusionTopology.pbpo([(0,), (1,)], [local, local])
    return Scenario(
        object_space=prior.space,
        prior=prior,
        sensors=(
            _fourclass_sensor(FOURCLASS_STD_A),
            _fourclass_sensor(FOURCLASS_STD_B),
        ),
        decision_space=decisions,
        name=f"fourclass-{variant}",
        topology=topology,
    )


def poisson_binary() -> Scenario:
    """H in {1, 2} with equal prior, two Poisson(h) counts, K = {1, 2}."""
    prior = DiscretePrior.uniform([1.0, 2.0])
    return Scenario(
        object_space=prior.space,
        prior=prior,
        sensors=(PoissonSensor(), PoissonSensor()),
        decision_space=DecisionSpace.discrete([1.0, 2.0]),
        name="poisson-binary",
    )


def mixture() -> Scenario:
    """
    I = K = [0, 4] under a normal prior truncated to I; A is an exponential-uniform
    mixture, B a narrow/wide Gaussian mixture, both conditioned on J = [0, 5].

    The prior integrates on nodes spaced logarithmically from 1e-12 up to
    h = 0.05 and about 0.01 apart above.
    """
    lo, hi = MIXTURE_SMALLEST_NODE, MIXTURE_RANGE[1]
    rule = QuadratureRule(
        LOG_TRAPEZOID,
        log_trapezoid_size(lo, hi, MIXTURE_STEP, MIXTURE_KNEE),
        (lo, hi),
        knee=MIXTURE_KNEE,
    )
    prior = TruncatedNormalPrior(*MIXTURE_RANGE, mean=0.0, std=1.0, rule=rule)
    return Scenario(
        object_space=ObjectSpace.interval(*MIXTURE_RANGE),
        prior=prior,
        sensors=(
            exponential_uniform_mixture(MIXTURE_FEATURE_RANGE),
            narrow_wide_gaussian_mixture(MIXTURE_FEATURE_RANGE),
        ),
        decision_space=DecisionSpace.interval(*MIXTURE_RANGE),
        name="mixture",
    )


@dataclass(frozen=True)
class BuiltinScenario:
    """Registry entry: factory plus the parameters it accepts and their types."""

    name: str
    factory: Callable[..., Scenario]
    params: Mapping[str, Callable[[str], object]]
    description: str

    def build(self, raw: Optional[Mapping[str, str]] = None) -> Scenario:
        raw = dict(raw or {})
        unknown = sorted(set(raw) - set(self.params))
        if unknown:
            raise InputDomainError(
                f"Scenario {self.name} does not take {unknown}; accepted: {sorted(self.params)}"
            )
        kwargs = {
            key: _convert(self.name, key, value, self.params[key]) for key, value in raw.items()
        }
        scenario = self.factory(**kwargs)
        logger.debug(f"Built scenario {self.name} with {raw}")
        return scenario


BUILTIN_SCENARIOS: Dict[str, BuiltinScenario] = {
    entry.name: entry
    for entry in (
        BuiltinScenario(
            "gauss",
            gauss,
            {"u": float, "v": float, "M": int, "bound": float, "nodes": int},
            "Standard normal H, M linear Gaussian sensors",
        ),
        BuiltinScenario("expo", expo, {"M": int}, "Exponential H, M exponential sensors"),
        BuiltinScenario(
            "fourclass-hard",
            lambda: fourclass("hard"),
            {},
            "Four classes, decisions within the classes",
        ),
        BuiltinScenario(
            "fourclass-soft", lambda: fourclass("soft"), {}, "Four classes, decisions in [0, 3]"
        ),
        BuiltinScenario(
            "fourclass-pbpo",
            lambda: fourclass("pbpo"),
            {},
            "Four classes through two single-sensor local centers",
        ),
        BuiltinScenario("poisson-binary", poisson_binary, {}, "Binary H, two Poisson counts"),
        BuiltinScenario("mixture", mixture, {}, "Mixture-distributed sensors on [0, 4]"),
    )
}


def is_builtin(reference: str) -> bool:
    return reference.startswith(BUILTIN_PREFIX)


def builtin_scenario(name: str, params: Optional[Mapping[str, str]] = None) -> Scenario:
    """
    Build a named scenario.

    Args:
        name: Registry name, with or without the ``builtin:`` prefix
        params: Raw ``key=value`` parameters

    Raises:
        InputDomainError: Unknown name, unknown parameter, or invalid value
    """
    key = name[len(BUILTIN_PREFIX):] if is_builtin(name) else name
    try:
        entry = BUILTIN_SCENARIOS[key]
    except KeyError:
        raise InputDomainError(
            f"Unknown built-in scenario '{key}', expected one of {sorted(BUILTIN_SCENARIOS)}"
        ) from None
    return entry.build(params)
