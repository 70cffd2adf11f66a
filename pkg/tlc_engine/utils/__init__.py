"""
Utilities package for TLC Engine
"""

from .logging import configure_logging, get_logger
from .monitoring import ChatteringMonitor, MetricsCollector, PerformanceTimer

__all__ = ["ChatteringMonitor", "MetricsCollector", "PerformanceTimer", "configure_logging", "get_logger"]
