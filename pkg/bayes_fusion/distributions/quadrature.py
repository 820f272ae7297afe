"""
Fixed quadrature rules for integrating against a prior density.

Every rule returns ``(nodes, weights)`` such that ``sum(weights * g(nodes))``
approximates an integral. The rules never adapt per call, so a fusion rule built
on them is a deterministic function of its inputs.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import special

from bayes_fusion.exceptions import InputDomainError

GAUSS_HERMITE = "gauss-hermite"
GAUSS_LAGUERRE = "gauss-laguerre"
GAUSS_LEGENDRE = "gauss-legendre"
TRAPEZOID = "trapezoid"
LOG_TRAPEZOID = "log-trapezoid"

QUADRATURE_KINDS = (GAUSS_HERMITE, GAUSS_LAGUERRE, GAUSS_LEGENDRE, TRAPEZOID, LOG_TRAPEZOID)
SPAN_KINDS = (GAUSS_LEGENDRE, TRAPEZOID, LOG_TRAPEZOID)


def gauss_hermite(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Hermite nodes and weights for integration against the standard normal density.

    Args:
        n: Number of nodes

    Returns:
        Tuple of (nodes, weights); the weights sum to 1
    """
    knots, weights = np.polynomial.hermite.hermgauss(n)
    return knots * np.sqrt(2.0), weights / np.sqrt(np.pi)


def gauss_laguerre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Laguerre nodes and weights for integration against e^{-x} on [0, inf)."""
    return np.polynomial.laguerre.laggauss(n)


def gauss_legendre(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes and weights on the interval [a, b].

    Args:
        a: Lower bound of the integration interval
        b: Upper bound of the integration interval
        n: Number of nodes

    Returns:
        Tuple of (nodes, weights) on [a, b]
    """
    knots, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * knots + 0.5 * (b + a), 0.5 * (b - a) * weights


def trapezoid(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite trapezoid rule with n equally spaced nodes on [a, b]."""
    if n < 2:
        raise InputDomainError(f"Trapezoid rule needs at least 2 nodes, got {n}")
    nodes = np.linspace(a, b, n)
    step = (b - a) / (n - 1)
    weights = np.full(n, step)
    weights[[0, -1]] = 0.5 * step
    return nodes, weights


def _graded_coordinate(h: np.ndarray, knee: Optional[float]) -> np.ndarray:
    if knee is None:
        return np.log(h)
    x = h / knee
    return x + np.log(-np.expm1(-x))


def log_trapezoid(
    a: float, b: float, n: int, knee: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trapezoid rule on [a, b], 0 < a < b, with nodes equally spaced in a graded coordinate.

    Without ``knee`` the coordinate is t = log h, so node spacing is proportional
    to h and posteriors of any scale down to ``a`` get the same relative
    resolution. With a knee the map is h = knee * log(1 + e^t): logarithmic
    spacing below the knee, uniform spacing of about knee * dt above it.

    Args:
        a: First node, strictly positive
        b: Last node
        n: Number of nodes
        knee: Scale where logarithmic spacing turns uniform

    Returns:
        Tuple of (nodes, weights) with the Jacobian dh/dt folded into the weights
    """
    if not 0 < a < b:
        raise InputDomainError(f"Log-spaced trapezoid needs 0 < a < b, got [{a}, {b}]")
    if knee is not None and not knee > 0:
        raise InputDomainError(f"Knee must be positive, got {knee}")
    lo, hi = _graded_coordinate(np.array([a, b], dtype=float), knee)
    t, weights = trapezoid(float(lo), float(hi), n)
    if knee is None:
        nodes = np.exp(t)
        return nodes, weights * nodes
    return knee * np.logaddexp(0.0, t), weights * knee * special.expit(t)


def log_trapezoid_size(a: float, b: float, step: float, knee: Optional[float] = None) -> int:
    """Node count that spaces a log-trapezoid rule on [a, b] at most ``step`` apart in t."""
    lo, hi = _graded_coordinate(np.array([a, b], dtype=float), knee)
    return math.ceil((hi - lo) / step) + 1


@dataclass(frozen=True)
class QuadratureRule:
    """Declared quadrature override for a continuous prior."""

    kind: str
    nodes: int
    span: Optional[Tuple[float, float]] = None
    knee: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in QUADRATURE_KINDS:
            raise InputDomainError(
                f"Unknown quadrature kind '{self.kind}', expected one of {QUADRATURE_KINDS}"
            )
        if self.nodes < 1:
            raise InputDomainError(f"Quadrature needs at least one node, got {self.nodes}")
        if self.kind in SPAN_KINDS:
            if self.span is None or not self.span[0] < self.span[1]:
                raise InputDomainError(f"{self.kind} rule requires a span lo < hi")
        if self.kind == LOG_TRAPEZOID:
            if not self.span[0] > 0:  # type: ignore[index]
                raise InputDomainError(f"{self.kind} rule requires a span starting above 0")
            if self.knee is not None and not self.knee > 0:
                raise InputDomainError(f"Knee must be positive, got {self.knee}")
        elif self.knee is not None:
            raise InputDomainError(f"Only the {LOG_TRAPEZOID} rule takes a knee")

    def describe(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"kind": self.kind, "nodes": self.nodes}
        if self.span is not None:
            doc["span"] = list(self.span)
        if self.knee is not None:
            doc["knee"] = self.knee
        return doc
