"""
Pytest configuration and fixtures
"""

from pathlib import Path

import pytest
import yaml

from ..core.config import Config
from ..core.models import (
    DEFAULT_PARAMETERS,
    ArrivalProcessSpec,
    ParameterVector,
    SimulationMode,
)


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run long acceptance experiments"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def test_config():
    """Runtime settings for tests"""
    return Config(
        environment="test",
        debug=True,
        log_json=False,
        workers=1,
    )


@pytest.fixture
def default_params():
    """Initial parameter vector [10, 20, 30, 50, 10, 10, 8, 8, 5, 5]"""
    return ParameterVector.from_array(DEFAULT_PARAMETERS)


def constant_fluid_spec(rates, seed: int = 7) -> ArrivalProcessSpec:
    """Fluid inputs whose rates never change within a test horizon"""
    return ArrivalProcessSpec(
        mode=SimulationMode.FLUID,
        mean_rates=tuple(rates),
        seed=seed,
        segment_mean=1e12,
        rate_spread=0.0,
    )


@pytest.fixture
def constant_fluid():
    """Factory for constant-rate fluid specs"""
    return constant_fluid_spec


@pytest.fixture
def discrete_spec():
    """Poisson arrivals at moderate load"""
    return ArrivalProcessSpec.from_interarrival(
        [6, 6, 10, 20], mode=SimulationMode.DISCRETE, seed=11
    )


@pytest.fixture
def fluid_spec():
    """Randomly modulated fluid inputs at moderate load"""
    return ArrivalProcessSpec.from_interarrival(
        [6, 6, 10, 20], mode=SimulationMode.FLUID, seed=11
    )


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML experiment config and return its path"""

    def _write(data, name: str = "experiment.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return _write
