"""
Services package for TLC Engine
"""

from .arrivals import ExogenousInputs, estimate_arrival_rate
from .ipa import ipa_gradient
from .optimizer import batch_optimize, online_optimize, project, smooth_gradient
from .oracle import compare_gradients, finite_difference_gradient, validate_gradient
from .simulator import IntersectionSimulator, advance, apply_event, next_event, run_sample_path

__all__ = [
    "ExogenousInputs",
    "IntersectionSimulator",
    "advance",
    "apply_event",
    "batch_optimize",
    "compare_gradients",
    "estimate_arrival_rate",
    "finite_difference_gradient",
    "ipa_gradient",
    "next_event",
    "online_optimize",
    "project",
    "run_sample_path",
    "smooth_gradient",
    "validate_gradient",
]
