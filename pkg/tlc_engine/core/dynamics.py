"""
Queue dynamics primitives for TLC Engine
"""

from typing import Sequence, Tuple

from .models import ParameterVector, QueueLevel, Region


_REGION_TABLE = {
    (QueueLevel.EMPTY, QueueLevel.EMPTY): Region.X0,
    (QueueLevel.LOW, QueueLevel.EMPTY): Region.X1,
    (QueueLevel.HIGH, QueueLevel.EMPTY): Region.X1P,
    (QueueLevel.EMPTY, QueueLevel.LOW): Region.X2,
    (QueueLevel.EMPTY, QueueLevel.HIGH): Region.X2P,
    (QueueLevel.LOW, QueueLevel.LOW): Region.X3,
    (QueueLevel.LOW, QueueLevel.HIGH): Region.X4,
    (QueueLevel.HIGH, QueueLevel.LOW): Region.X5,
    (QueueLevel.HIGH, QueueLevel.HIGH): Region.X6,
}


def validate_parameters(raw: Sequence[float]) -> ParameterVector:
    """Validate a raw 10-vector and wrap it as a ParameterVector

    Args:
        raw: Ten reals ordered theta1_min, theta1_max, theta2_min, theta2_max, theta3, theta4, s1..s4

    Returns:
        The validated parameter vector

    Raises:
        ParameterConstraintError: First violated constraint, with its 1-based index
    """
    return ParameterVector.from_array(raw)


def queue_level(x: float, s: float, zero_tolerance: float = 0.0) -> QueueLevel:
    """Level of one queue; x == s counts as HIGH"""
    if x <= zero_tolerance:
        return QueueLevel.EMPTY
    if x >= s:
        return QueueLevel.HIGH
    return QueueLevel.LOW


def region_from_levels(level1: QueueLevel, level2: QueueLevel) -> Region:
    return _REGION_TABLE[(level1, level2)]


def classify_region(x1: float, x2: float, s1: float, s2: float, zero_tolerance: float = 0.0) -> Region:
    """Map the vehicle queue pair to its region label

    Args:
        x1: Road 1 vehicle queue
        x2: Road 2 vehicle queue
        s1: Road 1 threshold
        s2: Road 2 threshold
        zero_tolerance: Contents at or below this count as empty

    Returns:
        The unique region containing (x1, x2)
    """
    return region_from_levels(
        queue_level(x1, s1, zero_tolerance),
        queue_level(x2, s2, zero_tolerance),
    )


def pedestrian_indicator(x_n: float, w_n: float, s_n: float, theta_n: float) -> int:
    """1 iff the pedestrian queue is long enough or has waited long enough"""
    return 1 if (x_n >= s_n or w_n >= theta_n) else 0


def indicator_from_flags(level: QueueLevel, wait_reached: bool) -> int:
    """Event-driven form of pedestrian_indicator"""
    return 1 if (level is QueueLevel.HIGH or wait_reached) else 0


def departure_rate(x_n: float, u_n: int, alpha_n: float, h_n: float) -> float:
    """Instantaneous departure rate of one flow

    GREEN with a backlog drains at h_n, GREEN with an empty queue passes the
    inflow through, RED releases nothing.
    """
    if u_n != 1:
        return 0.0
    return h_n if x_n > 0 else alpha_n


def region_and_indicators(
    levels: Tuple[QueueLevel, QueueLevel, QueueLevel, QueueLevel],
    w_reached: Tuple[bool, bool],
) -> Tuple[Region, Tuple[int, int]]:
    region = region_from_levels(levels[0], levels[1])
    p = (
        indicator_from_flags(levels[2], w_reached[0]),
        indicator_from_flags(levels[3], w_reached[1]),
    )
    return region, p
