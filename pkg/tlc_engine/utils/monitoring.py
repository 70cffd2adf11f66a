"""
Monitoring and metrics utilities
"""

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import structlog

from ..core.config import config

logger = structlog.get_logger(__name__)


@dataclass
class MetricPoint:
    """Individual metric measurement"""
    name: str
    value: float
    tags: Dict[str, str] = field(default_factory=dict)


class MetricsCollector:
    """Collect per-run metrics (durations, costs, switch rates)"""

    def __init__(self, max_points: int = 10000):
        """Initialize metrics collector

        Args:
            max_points: Maximum number of metric points to store
        """
        self.max_points = max_points
        self.metrics: List[MetricPoint] = []

    def record_metric(
        self,
        name: str,
        value: float,
        tags: Optional[Dict[str, str]] = None
    ) -> None:
        """Record a metric value

        Args:
            name: Metric name
            value: Metric value
            tags: Optional tags for metric
        """
        self.metrics.append(MetricPoint(name=name, value=float(value), tags=tags or {}))
        if len(self.metrics) > self.max_points:
            self.metrics = self.metrics[-self.max_points:]
        logger.debug("Recorded metric", name=name, value=value, tags=tags)

    def get_metrics(self, name: Optional[str] = None, limit: Optional[int] = None) -> List[MetricPoint]:
        """Stored points in recording order, optionally filtered by name"""
        points = self.metrics
        if name:
            points = [m for m in points if m.name == name]
        if limit:
            points = points[-limit:]
        return points

    def get_metric_summary(self, name: str) -> Dict[str, Any]:
        """Count/min/max/mean of one metric"""
        values = [p.value for p in self.get_metrics(name=name)]
        if not values:
            return {"name": name, "count": 0}
        return {
            "name": name,
            "count": len(values),
            "min": min(values),
            "max": max(values),
            "avg": sum(values) / len(values),
            "latest": values[-1],
        }

    def summaries(self) -> Dict[str, Dict[str, Any]]:
        """get_metric_summary for every recorded metric, in first-seen order"""
        names = dict.fromkeys(p.name for p in self.metrics)
        return {name: self.get_metric_summary(name) for name in names}


class PerformanceTimer:
    """Context manager for timing operations"""

    def __init__(self, operation_name: str, metrics_collector: Optional[MetricsCollector] = None):
        """Initialize performance timer

        Args:
            operation_name: Name of operation being timed
            metrics_collector: Optional metrics collector to record timing
        """
        self.operation_name = operation_name
        self.metrics_collector = metrics_collector
        self.start_time = None
        self.end_time = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        logger.debug("Started timing operation", operation=self.operation_name)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end_time = time.perf_counter()
        duration = self.end_time - self.start_time

        if self.metrics_collector:
            self.metrics_collector.record_metric(
                f"operation_duration_{self.operation_name}",
                duration,
                {"operation": self.operation_name}
            )

        if exc_type is None:
            logger.info("Completed operation", operation=self.operation_name, duration=duration)
        else:
            logger.error(
                "Operation failed",
                operation=self.operation_name,
                duration=duration,
                error=str(exc_val)
            )

    @property
    def duration(self) -> Optional[float]:
        """Duration in seconds, or None if not completed"""
        if self.start_time is not None and self.end_time is not None:
            return self.end_time - self.start_time
        return None


class ChatteringMonitor:
    """Track light-switch rates of simulated paths"""

    def __init__(self, threshold: Optional[float] = None):
        """Initialize chattering monitor

        Args:
            threshold: Switches per 100 s above which a path is flagged
        """
        self.threshold = config.chattering_threshold if threshold is None else threshold
        self.paths: List[Dict[str, Any]] = []

    def record_path(self, label: str, switches_per_100s: float, suppressed: int = 0) -> None:
        flagged = switches_per_100s > self.threshold
        self.paths.append({
            "label": label,
            "switches_per_100s": switches_per_100s,
            "suppressed": suppressed,
            "flagged": flagged,
        })
        if flagged:
            logger.warning(
                "Chattering path",
                label=label,
                switches_per_100s=switches_per_100s,
                threshold=self.threshold,
            )

    @property
    def flagged(self) -> List[str]:
        return [p["label"] for p in self.paths if p["flagged"]]

    def get_summary(self) -> Dict[str, Any]:
        if not self.paths:
            return {"paths": 0, "max_switches_per_100s": 0.0, "flagged": [], "suppressed": 0}
        return {
            "paths": len(self.paths),
            "max_switches_per_100s": max(p["switches_per_100s"] for p in self.paths),
            "mean_switches_per_100s": sum(p["switches_per_100s"] for p in self.paths) / len(self.paths),
            "suppressed": sum(p["suppressed"] for p in self.paths),
            "flagged": self.flagged,
            "threshold": self.threshold,
        }
