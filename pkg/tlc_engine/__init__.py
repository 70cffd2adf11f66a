"""
TLC Engine - adaptive traffic light control at a single intersection

Event-driven simulation of two vehicle flows and two crossing pedestrian
flows under a quasi-dynamic light policy, infinitesimal perturbation
analysis of the simulated sample paths, and gradient-based adaptation of
the ten policy parameters.
"""

__version__ = "1.0.0"

from .core.config import Config, ExperimentConfig, parse_config
from .core.engine import ExperimentEngine
from .core.models import ArrivalProcessSpec, ParameterVector
from .services.ipa import ipa_gradient
from .services.simulator import IntersectionSimulator, run_sample_path

__all__ = [
    "ArrivalProcessSpec",
    "Config",
    "ExperimentConfig",
    "ExperimentEngine",
    "IntersectionSimulator",
    "ParameterVector",
    "ipa_gradient",
    "parse_config",
    "run_sample_path",
]
