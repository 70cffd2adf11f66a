"""
Data models for TLC Engine
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import ParameterConstraintError


PARAMETER_NAMES: Tuple[str, ...] = (
    "theta1_min", "theta1_max", "theta2_min", "theta2_max",
    "theta3", "theta4", "s1", "s2", "s3", "s4",
)
DEFAULT_PARAMETERS: Tuple[float, ...] = (10.0, 20.0, 30.0, 50.0, 10.0, 10.0, 8.0, 8.0, 5.0, 5.0)
NUM_PARAMETERS = len(PARAMETER_NAMES)
NUM_FLOWS = 4


class SimulationMode(str, Enum):
    """Arrival/queue abstraction used by the simulator"""
    FLUID = "fluid"
    DISCRETE = "discrete"


class Policy(str, Enum):
    """Signal policy driving a sample path"""
    QUASI_DYNAMIC = "quasi-dynamic"
    BASELINE = "baseline"


class ScenarioName(str, Enum):
    """Experiment scenarios exposed by the CLI"""
    SIMULATE = "simulate"
    OPTIMIZE = "optimize"
    ONLINE = "online"
    VALIDATE_GRADIENT = "validate-gradient"
    SWEEP = "sweep"
    COMPARE_BASELINE = "compare-baseline"


class Region(str, Enum):
    """Partition cell of the vehicle queue quadrant (x1, x2)"""
    X0 = "X0"
    X1 = "X1"
    X1P = "X1'"
    X2 = "X2"
    X2P = "X2'"
    X3 = "X3"
    X4 = "X4"
    X5 = "X5"
    X6 = "X6"


class QueueLevel(str, Enum):
    """Aggregated queue content relative to {0, s_n}"""
    EMPTY = "empty"
    LOW = "low"
    HIGH = "high"


class EventKind(str, Enum):
    """Observable, compound, controllable and bookkeeping event kinds"""
    X_DOWN_ZERO = "x_down_zero"
    X_UP_ZERO = "x_up_zero"
    X_UP_THRESHOLD = "x_up_threshold"
    X_DOWN_THRESHOLD = "x_down_threshold"
    ALPHA_DOWN_ZERO = "alpha_down_zero"
    ALPHA_UP_ZERO = "alpha_up_zero"
    RATE_CHANGE = "rate_change"
    ARRIVAL = "arrival"
    DEPARTURE = "departure"
    Z_MIN = "z_min"
    Z_MAX = "z_max"
    W_THRESHOLD = "w_threshold"
    P_UP = "p_up"
    P_DOWN = "p_down"
    G2R = "g2r"
    R2G = "r2g"
    WINDOW_START = "window_start"
    HORIZON_END = "horizon_end"


# Kinds that never alter the mode structure of a fluid path
EXOGENOUS_NOISE_KINDS = frozenset({EventKind.ARRIVAL, EventKind.DEPARTURE, EventKind.RATE_CHANGE})

# Kinds whose occurrence can flip a control condition
GUARD_KINDS = frozenset({
    EventKind.X_DOWN_ZERO, EventKind.X_UP_ZERO, EventKind.X_UP_THRESHOLD,
    EventKind.X_DOWN_THRESHOLD, EventKind.ALPHA_DOWN_ZERO, EventKind.ALPHA_UP_ZERO,
    EventKind.Z_MIN, EventKind.Z_MAX, EventKind.W_THRESHOLD,
    EventKind.P_UP, EventKind.P_DOWN, EventKind.G2R, EventKind.R2G,
})


def check_parameter_constraints(values) -> None:
    """Raise ParameterConstraintError for the first violated constraint

    Args:
        values: Ten reals in parameter-vector order

    Raises:
        ParameterConstraintError: Names the 1-based index and the constraint
    """
    values = tuple(float(v) for v in values)
    if len(values) != NUM_PARAMETERS:
        raise ParameterConstraintError(
            f"Expected {NUM_PARAMETERS} parameters, got {len(values)}",
            constraint="length",
        )
    for i, v in enumerate(values, start=1):
        if not math.isfinite(v):
            raise ParameterConstraintError(
                f"Parameter {i} ({PARAMETER_NAMES[i - 1]}) is not finite: {v}",
                index=i, constraint="finite",
            )
    for road in (1, 2):
        i_min, i_max = 2 * road - 1, 2 * road
        t_min, t_max = values[i_min - 1], values[i_max - 1]
        if t_min < 0:
            raise ParameterConstraintError(
                f"Parameter {i_min} (theta{road}_min) must be >= 0, got {t_min}",
                index=i_min, constraint=f"theta{road}_min >= 0",
            )
        if t_max < t_min:
            raise ParameterConstraintError(
                f"Parameter {i_max} (theta{road}_max={t_max}) must be >= theta{road}_min={t_min}",
                index=i_max, constraint=f"theta{road}_max >= theta{road}_min",
            )
    for i in range(5, NUM_PARAMETERS + 1):
        if values[i - 1] <= 0:
            raise ParameterConstraintError(
                f"Parameter {i} ({PARAMETER_NAMES[i - 1]}) must be > 0, got {values[i - 1]}",
                index=i, constraint=f"{PARAMETER_NAMES[i - 1]} > 0",
            )


class ParameterVector(BaseModel):
    """The ten controllable thresholds of the quasi-dynamic policy"""
    model_config = ConfigDict(frozen=True)

    theta1_min: float = Field(..., description="Minimum GREEN time for road 1 (s)")
    theta1_max: float = Field(..., description="Maximum GREEN time for road 1 (s)")
    theta2_min: float = Field(..., description="Minimum GREEN time for road 2 (s)")
    theta2_max: float = Field(..., description="Maximum GREEN time for road 2 (s)")
    theta3: float = Field(..., description="Pedestrian wait threshold, flow 3 (s)")
    theta4: float = Field(..., description="Pedestrian wait threshold, flow 4 (s)")
    s1: float = Field(..., description="Vehicle queue threshold, road 1")
    s2: float = Field(..., description="Vehicle queue threshold, road 2")
    s3: float = Field(..., description="Pedestrian queue threshold, flow 3")
    s4: float = Field(..., description="Pedestrian queue threshold, flow 4")

    @model_validator(mode="after")
    def _check_constraints(self) -> "ParameterVector":
        check_parameter_constraints(self.as_tuple())
        return self

    @classmethod
    def from_array(cls, raw) -> "ParameterVector":
        """Build from ten reals in parameter-vector order"""
        values = [float(v) for v in raw]
        check_parameter_constraints(values)
        return cls(**dict(zip(PARAMETER_NAMES, values)))

    def as_tuple(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in PARAMETER_NAMES)

    def as_array(self) -> np.ndarray:
        """0-based numpy view; entry i-1 holds parameter i"""
        return np.array(self.as_tuple(), dtype=float)

    def theta_min(self, road: int) -> float:
        return self.theta1_min if road == 1 else self.theta2_min

    def theta_max(self, road: int) -> float:
        return self.theta1_max if road == 1 else self.theta2_max

    def wait_threshold(self, flow: int) -> float:
        return self.theta3 if flow == 3 else self.theta4

    def queue_threshold(self, flow: int) -> float:
        return (self.s1, self.s2, self.s3, self.s4)[flow - 1]


class RatePerturbation(BaseModel):
    """Multiplicative change of one flow's mean arrival rate over [start, end)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    flow: int = Field(..., ge=1, le=4, description="Flow index 1..4")
    factor: float = Field(..., ge=0.0, description="Rate multiplier")
    start: float = Field(..., ge=0.0, description="Start time (s)")
    end: float = Field(..., description="End time (s)")

    @model_validator(mode="after")
    def _check_window(self) -> "RatePerturbation":
        if self.end <= self.start:
            raise ValueError("perturbation end must be after start")
        return self


class ArrivalProcessSpec(BaseModel):
    """Exogenous arrival processes for the four flows"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: SimulationMode = Field(default=SimulationMode.DISCRETE, description="fluid or discrete")
    mean_rates: Tuple[float, float, float, float] = Field(..., description="Mean arrival rates (1/s)")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master seed for all flow streams")
    segment_mean: float = Field(default=30.0, gt=0.0, description="Mean fluid segment duration (s)")
    rate_spread: float = Field(default=1.0, ge=0.0, le=1.0, description="Relative half-width of fluid segment rates")
    off_probability: float = Field(default=0.0, ge=0.0, lt=1.0, description="Probability a fluid segment is OFF")
    perturbations: Tuple[RatePerturbation, ...] = Field(default=(), description="Rate perturbation schedule")
    rate_window: float = Field(default=60.0, gt=0.0, description="Window for windowed rate estimates (s)")
    approach_time: float = Field(
        default=0.0, ge=0.0, description="Travel time from detection to the stop line, discrete vehicles (s)"
    )

    @field_validator("mean_rates")
    @classmethod
    def _non_negative(cls, v):
        if any(r < 0 or not math.isfinite(r) for r in v):
            raise ValueError("arrival rates must be finite and >= 0")
        return v

    @classmethod
    def from_interarrival(cls, interarrival, **kwargs) -> "ArrivalProcessSpec":
        """Build from mean interarrival times 1/alpha"""
        return cls(mean_rates=tuple(1.0 / float(t) for t in interarrival), **kwargs)

    def with_seed(self, seed: int) -> "ArrivalProcessSpec":
        return self.model_copy(update={"seed": int(seed)})

    def scaled(self, factor: float) -> "ArrivalProcessSpec":
        return self.model_copy(update={"mean_rates": tuple(r * factor for r in self.mean_rates)})

    def rate_factor(self, flow: int, t: float) -> float:
        """Product of active perturbation factors for a flow at time t"""
        factor = 1.0
        for p in self.perturbations:
            if p.flow == flow and p.start <= t < p.end:
                factor *= p.factor
        return factor


class GradientReport(BaseModel):
    """IPA gradient of one trace"""
    grad: List[float] = Field(..., description="dL/d(upsilon), parameter-vector order")
    cost: float = Field(..., serialization_alias="L", description="Sample cost of the trace")
    degenerate_count: int = Field(default=0, description="Event-time derivatives zeroed by the denominator guard")
    events_processed: int = Field(default=0, description="Records consumed")


class GradientComparison(BaseModel):
    """IPA versus central finite differences"""
    ipa: List[float] = Field(..., description="IPA gradient")
    fd: List[float] = Field(..., description="Finite-difference gradient")
    relative_error: List[Optional[float]] = Field(..., description="|ipa-fd|/|fd| on compared coordinates")
    stable: List[bool] = Field(..., description="Event sequence unchanged under +/- delta")
    effective_delta: List[float] = Field(default_factory=list, description="Step actually used per coordinate")
    cosine_similarity: Optional[float] = Field(None, description="Cosine over stable coordinates")
    max_relative_error: Optional[float] = Field(None, description="Largest compared relative error")
    compared: int = Field(default=0, description="Stable coordinates with |fd| above the floor")
    chattering: bool = Field(default=False, description="Base path switched faster than the chattering threshold")
    switches_per_100s: Optional[float] = Field(None, description="Switch rate of the base path")
    verdict: str = Field(default="vacuous", description="agree, mismatch, vacuous or chattering")
    passed: bool = Field(default=False, description="Non-vacuous agreement on a path that does not chatter")


class IterationRecord(BaseModel):
    """One optimizer step (batch iteration or online window)"""
    iteration: int = Field(..., description="Iteration / window index")
    parameters: List[float] = Field(..., description="Parameters in force during this iteration")
    cost: float = Field(..., description="Sample-mean cost J_hat (or window cost)")
    gradient: List[float] = Field(..., description="Gradient used for the step")
    raw_gradient: Optional[List[float]] = Field(None, description="Unsmoothed window gradient")
    grad_norm: float = Field(..., description="Infinity norm of the gradient used")
    step_size: float = Field(..., description="Step size rho applied (0 when no step taken)")
    t_start: Optional[float] = Field(None, description="Window start (online)")
    t_end: Optional[float] = Field(None, description="Window end (online)")
    degenerate_count: int = Field(default=0, description="Degenerate event-time derivatives")


class OptimizationTrajectory(BaseModel):
    """Parameter and cost history of an optimisation run"""
    kind: str = Field(..., description="batch or online")
    records: List[IterationRecord] = Field(default_factory=list)

    @property
    def initial_cost(self) -> float:
        return self.records[0].cost

    @property
    def final_cost(self) -> float:
        return self.records[-1].cost

    @property
    def final_parameters(self) -> List[float]:
        return self.records[-1].parameters

    @property
    def reduction_percent(self) -> float:
        if self.initial_cost <= 0:
            return 0.0
        return 100.0 * (self.initial_cost - self.final_cost) / self.initial_cost


@dataclass(frozen=True, slots=True)
class FlowRates:
    """Rates in force over an inter-event interval"""
    alpha: Tuple[float, float, float, float]
    h: float
    capacity: Tuple[float, float, float, float] = None

    def __post_init__(self):
        if self.capacity is None:
            object.__setattr__(self, "capacity", (self.h,) * NUM_FLOWS)


@dataclass(frozen=True, slots=True)
class ScheduledEvent:
    """Exogenous event known ahead of time (arrival, rate switch, horizon)"""
    time: float
    kind: EventKind
    flow: int = 0


@dataclass(frozen=True, slots=True)
class PendingEvent:
    """Event due at the end of the current interval"""
    kind: EventKind
    flow: int = 0


@dataclass(frozen=True, slots=True)
class HybridState:
    """Continuous and discrete state of the intersection at time t (right limit)"""
    t: float
    x: Tuple[float, float, float, float]
    z: Tuple[float, float]
    w: Tuple[float, float]
    u: Tuple[int, int, int, int]
    levels: Tuple[QueueLevel, QueueLevel, QueueLevel, QueueLevel]
    region: Region
    p: Tuple[int, int]
    z_min_reached: Tuple[bool, bool] = (False, False)
    z_max_reached: Tuple[bool, bool] = (False, False)
    w_reached: Tuple[bool, bool] = (False, False)
    service_ready: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    last_served: int = 0
    last_release: float = 0.0
    # detection times of the entities queued per flow, oldest first (discrete)
    queue_arrivals: Tuple[Tuple[float, ...], ...] = ((), (), (), ())

    @property
    def u1(self) -> int:
        return self.u[0]


@dataclass(frozen=True, slots=True)
class EventRecord:
    """One timestamped event occurrence with the post-event state"""
    index: int
    tau: float
    kind: EventKind
    flow: int
    x: Tuple[float, float, float, float]
    z: Tuple[float, float]
    w: Tuple[float, float]
    u: Tuple[int, int, int, int]
    region: Region
    p: Tuple[int, int]
    region_before: Region
    p_before: Tuple[int, int]
    alpha: Tuple[float, float, float, float]
    h: float
    cause: Optional[int] = None
    levels: Tuple[QueueLevel, ...] = ()

    @property
    def u1(self) -> int:
        return self.u[0]


@dataclass
class TraceDiagnostics:
    """Counters collected while simulating one path"""
    switches: int = 0
    chattering: int = 0
    events: int = 0
    extra: dict = field(default_factory=dict)
