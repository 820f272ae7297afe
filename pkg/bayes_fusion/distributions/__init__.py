"""
Density families, priors and quadrature rules used by the fusion engine.
"""

from bayes_fusion.distributions.params import Affine, Constant, ParamFn, Power, Table, as_param
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
    DiscreteOutputSensor,
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

__all__ = [
    "Affine",
    "Constant",
    "DiscreteOutputSensor",
    "DiscretePrior",
    "ExponentialPrior",
    "ExponentialSensor",
    "GaussianSensor",
    "MixtureSensor",
    "ParamFn",
    "PoissonSensor",
    "Power",
    "Prior",
    "QuadratureRule",
    "RestrictedSensor",
    "SensorModel",
    "StandardNormalPrior",
    "Table",
    "TabulatedPrior",
    "TruncatedNormalPrior",
    "UniformSensor",
    "as_param",
    "exponential_uniform_mixture",
    "narrow_wide_gaussian_mixture",
]
