"""
Pytest configuration and fixtures.
"""

from pathlib import Path

import numpy as np
import pytest

from bayes_fusion.models import Scenario
from bayes_fusion.services.builtin_scenarios import builtin_scenario
from bayes_fusion.services.montecarlo_service import MonteCarloService


@pytest.fixture(autouse=True)
def output_dir(settings, tmp_path: Path) -> Path:
    """Send every default output directory into the test's tmp_path."""
    settings.FUSION_OUTPUT_DIR = tmp_path / "runs"
    return settings.FUSION_OUTPUT_DIR


@pytest.fixture
def service() -> MonteCarloService:
    """Provide a Monte Carlo service with small sub-batches."""
    return MonteCarloService(max_concurrent=2, chunk_size=1000)


@pytest.fixture
def gauss_scenario() -> Scenario:
    """Provide the Gaussian scenario with two unit sensors."""
    return builtin_scenario("gauss", {"M": "2"})


@pytest.fixture
def gauss4_scenario() -> Scenario:
    """Provide the Gaussian scenario with four unit sensors."""
    return builtin_scenario("gauss", {"M": "4"})


@pytest.fixture
def expo_scenario() -> Scenario:
    """Provide the exponential scenario with two sensors."""
    return builtin_scenario("expo", {"M": "2"})


@pytest.fixture
def poisson_scenario() -> Scenario:
    """Provide the binary Poisson scenario."""
    return builtin_scenario("poisson-binary")


@pytest.fixture
def rng() -> np.random.Generator:
    """Provide a seeded generator for test points."""
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian_scenario_doc() -> dict:
    """Provide a scenario document equivalent to builtin:gauss with M=2."""
    return {
        "name": "two-gauss",
        "object_space": {"interval": ["-inf", "inf"]},
        "prior": {"form": "standard-normal"},
        "sensors": [
            {"family": "gaussian", "mean": {"form": "affine", "slope": [1.0]}, "variance": 1.0},
            {"family": "gaussian", "mean": {"form": "affine", "slope": [1.0]}, "variance": 1.0},
        ],
        "decision_space": {"interval": ["-inf", "inf"]},
        "cost": "squared",
        "even_cost_optimal": True,
    }
