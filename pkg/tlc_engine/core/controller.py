"""
Quasi-dynamic traffic light control law for TLC Engine
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from .models import ParameterVector, Region


GREEN_ROAD_1 = (1, 0, 0, 1)
GREEN_ROAD_2 = (0, 1, 1, 0)


@dataclass(frozen=True, slots=True)
class ControlDecision:
    """Light setting for t+ and whether it differs from the current phase"""
    u1: int
    switch_now: bool
    lights: Tuple[int, int, int, int]
    triggering_event: Optional[int] = None


def expand_control(u1: int) -> Tuple[int, int, int, int]:
    """Coupled four-flow light vector for the road-1 light"""
    return GREEN_ROAD_1 if u1 == 1 else GREEN_ROAD_2


def contract_control(u: Sequence[int]) -> int:
    """Inverse of expand_control"""
    u = tuple(u)
    if u == GREEN_ROAD_1:
        return 1
    if u == GREEN_ROAD_2:
        return 0
    raise ValueError(f"Light vector {u} is not a feasible control")


def _road1_keeps_green(region: Region, p1: int, p2: int, z1: float, params: ParameterVector) -> bool:
    """Road 1 is GREEN with clock z1 (0 right after its R2G)"""
    t_min, t_max = params.theta1_min, params.theta1_max
    if region is Region.X0:
        return (z1 < t_max and p1 == 1 and p2 == 1) or p1 == 0
    if region in (Region.X1, Region.X1P):
        return z1 < t_min or p1 <= p2
    if region in (Region.X2, Region.X2P):
        return z1 < t_max and p2 == 1
    if region in (Region.X3, Region.X6):
        return z1 < t_min or (z1 < t_max and p1 <= p2)
    if region is Region.X4:
        return z1 < t_min
    # X5
    return z1 < t_max


def _road1_takes_green(region: Region, p1: int, p2: int, z2: float, params: ParameterVector) -> bool:
    """Road 2 is GREEN with clock z2; True hands GREEN back to road 1"""
    t_min, t_max = params.theta2_min, params.theta2_max
    if region is Region.X0:
        return (z2 >= t_max and p1 == 1 and p2 == 1) or (p1 == 0 and p2 == 1)
    if region in (Region.X1, Region.X1P):
        return (z2 < t_max and p1 == 0) or z2 >= t_max
    if region in (Region.X2, Region.X2P):
        return z2 >= t_min and p1 == 0 and p2 == 1
    if region in (Region.X3, Region.X6):
        return (t_min <= z2 < t_max and p1 == 0 and p2 == 1) or z2 >= t_max
    if region is Region.X4:
        return z2 >= t_max
    # X5
    return z2 >= t_min


def control_decision(
    region: Region,
    p: Sequence[int],
    z: Sequence[float],
    params: ParameterVector,
    current_u1: int,
    triggering_event: Optional[int] = None,
) -> ControlDecision:
    """Evaluate the region rule for u1 at an event instant

    Clock conditions are read against the running phase: a clock interval
    on z1 only applies while road 1 is GREEN, and a just-switched clock is
    0+ so it lies inside (0, theta).

    Args:
        region: Current vehicle-queue region
        p: Pedestrian indicators [p1, p2]
        z: GREEN clocks [z1, z2]
        params: Controllable parameters
        current_u1: Road-1 light before the decision
        triggering_event: Record index of the event being processed

    Returns:
        ControlDecision for t+
    """
    p1, p2 = p[0], p[1]
    if current_u1 == 1:
        u1 = 1 if _road1_keeps_green(region, p1, p2, z[0], params) else 0
    else:
        u1 = 1 if _road1_takes_green(region, p1, p2, z[1], params) else 0
    switch = u1 != current_u1
    return ControlDecision(
        u1=u1,
        switch_now=switch,
        lights=expand_control(u1),
        triggering_event=triggering_event if switch else None,
    )


def baseline_decision(
    x: Sequence[float],
    u: Sequence[int],
    triggering_event: Optional[int] = None,
) -> ControlDecision:
    """Uncontrolled intersection: pedestrians always have the right of way

    A road's vehicles halt while the pedestrian flow crossing it is
    non-empty and resume once it clears.
    """
    lights = (
        0 if x[2] > 0 else 1,
        0 if x[3] > 0 else 1,
        1,
        1,
    )
    switch = lights != tuple(u)
    return ControlDecision(
        u1=lights[0],
        switch_now=switch,
        lights=lights,
        triggering_event=triggering_event if switch else None,
    )
