"""
Event-driven intersection simulator for TLC Engine
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

from ..core.config import Config, config
from ..core.controller import (
    GREEN_ROAD_1,
    baseline_decision,
    control_decision,
)
from ..core.dynamics import departure_rate, queue_level, region_and_indicators
from ..core.exceptions import EventSkippedError, NonconvergenceError
from ..core.models import (
    NUM_FLOWS,
    ArrivalProcessSpec,
    EventKind,
    EventRecord,
    EXOGENOUS_NOISE_KINDS,
    FlowRates,
    HybridState,
    ParameterVector,
    PendingEvent,
    Policy,
    QueueLevel,
    ScheduledEvent,
    SimulationMode,
    TraceDiagnostics,
)
from .arrivals import ExogenousInputs

logger = logging.getLogger(__name__)

DEFAULT_DEPARTURE_RATE = 1.2
DEFAULT_CONFLICT_HEADWAY = 2.5

# Zero-duration steps allowed back to back before the path is declared stuck
_MAX_ZERO_STEPS = 1000

_RATE_KINDS = (EventKind.ALPHA_DOWN_ZERO, EventKind.ALPHA_UP_ZERO, EventKind.RATE_CHANGE)
_FLOW_KIND_RANK = {
    EventKind.X_DOWN_ZERO: 0,
    EventKind.X_UP_ZERO: 1,
    EventKind.X_UP_THRESHOLD: 2,
    EventKind.X_DOWN_THRESHOLD: 3,
    EventKind.ARRIVAL: 4,
    EventKind.DEPARTURE: 5,
}
_CLOCK_KIND_RANK = {EventKind.Z_MIN: 0, EventKind.Z_MAX: 1, EventKind.W_THRESHOLD: 2}


def event_order(event: PendingEvent) -> Tuple[int, int, int]:
    """Deterministic sub-order of simultaneous events

    Rate changes first, then flow-state events in flow order, then clock
    events, then bookkeeping.
    """
    kind = event.kind
    if kind in _RATE_KINDS:
        return (0, event.flow, _RATE_KINDS.index(kind))
    if kind in _FLOW_KIND_RANK:
        return (1, event.flow, _FLOW_KIND_RANK[kind])
    if kind in _CLOCK_KIND_RANK:
        return (2, event.flow, _CLOCK_KIND_RANK[kind])
    return (3, event.flow, 0)


def _clock_flags(road: int, z: float, params: ParameterVector) -> Tuple[bool, bool]:
    return z >= params.theta_min(road), z >= params.theta_max(road)


def initial_state(params: ParameterVector, policy: Policy = Policy.QUASI_DYNAMIC, t0: float = 0.0) -> HybridState:
    """Empty intersection with road 1 GREEN and its clock at 0+"""
    if policy is Policy.QUASI_DYNAMIC:
        lights = GREEN_ROAD_1
        z_min1, z_max1 = _clock_flags(1, 0.0, params)
        z_min_reached, z_max_reached = (z_min1, False), (z_max1, False)
    else:
        # no light, no clock events: flags start set
        lights = (1, 1, 1, 1)
        z_min_reached = z_max_reached = (True, True)
    levels = (QueueLevel.EMPTY,) * NUM_FLOWS
    region, p = region_and_indicators(levels, (False, False))
    return HybridState(
        t=t0,
        x=(0.0, 0.0, 0.0, 0.0),
        z=(0.0, 0.0),
        w=(0.0, 0.0),
        u=lights,
        levels=levels,
        region=region,
        p=p,
        z_min_reached=z_min_reached,
        z_max_reached=z_max_reached,
        w_reached=(False, False),
        service_ready=(t0, t0, t0, t0),
    )


def queue_slope(state: HybridState, i: int, rates: FlowRates) -> float:
    """dx/dt of flow i+1 over the current interval (fluid)"""
    occupied = 0.0 if state.levels[i] is QueueLevel.EMPTY else 1.0
    alpha = rates.alpha[i]
    return alpha - departure_rate(occupied, state.u[i], alpha, rates.capacity[i])


def advance(
    state: HybridState,
    dt: float,
    rates: FlowRates,
    params: Optional[ParameterVector] = None,
    mode: SimulationMode = SimulationMode.FLUID,
    zero_tolerance: Optional[float] = None,
) -> HybridState:
    """Integrate the time-driven dynamics over an event-free interval

    Args:
        state: State at the start of the interval
        dt: Interval length (s)
        rates: Rates in force over the interval
        params: When given, threshold crossings inside the interval are detected
        mode: Discrete queues are piecewise constant between events
        zero_tolerance: Crossing slack per unit of threshold; defaults to config.zero_tolerance

    Returns:
        State at t + dt

    Raises:
        EventSkippedError: The interval stepped over an event
    """
    if dt < 0:
        raise EventSkippedError(f"Negative step {dt} at t={state.t}", time=state.t, dt=dt)
    if dt == 0:
        return state

    if mode is SimulationMode.FLUID:
        x = [state.x[i] + queue_slope(state, i, rates) * dt for i in range(NUM_FLOWS)]
    else:
        x = list(state.x)
    z = [state.z[n] + (dt if state.u[n] == 1 else 0.0) for n in range(2)]
    w = [
        state.w[k] + (dt if state.u[k + 2] == 0 and state.levels[k + 2] is not QueueLevel.EMPTY else 0.0)
        for k in range(2)
    ]

    if params is not None:
        tolerance = config.zero_tolerance if zero_tolerance is None else zero_tolerance
        _check_interval(state, dt, x, z, w, params, tolerance)

    return replace(
        state,
        t=state.t + dt,
        x=tuple(max(v, 0.0) for v in x),
        z=tuple(z),
        w=tuple(w),
    )


def _check_interval(state: HybridState, dt: float, x, z, w, params: ParameterVector, tolerance: float) -> None:
    def skipped(what: str) -> EventSkippedError:
        return EventSkippedError(f"{what} inside ({state.t}, {state.t + dt})", time=state.t, dt=dt)

    def past(clock: float, limit: float) -> bool:
        return clock > limit + tolerance * max(1.0, limit)

    for i in range(NUM_FLOWS):
        s = params.queue_threshold(i + 1)
        slack = tolerance * max(1.0, s)
        level = state.levels[i]
        if x[i] < -slack:
            raise skipped(f"x{i + 1} went negative")
        if level is QueueLevel.EMPTY and x[i] > slack:
            raise skipped(f"x{i + 1} left zero")
        if level is QueueLevel.LOW and x[i] > s + slack:
            raise skipped(f"x{i + 1} crossed s{i + 1} upward")
        if level is QueueLevel.HIGH and x[i] < s - slack:
            raise skipped(f"x{i + 1} crossed s{i + 1} downward")
    for n in (1, 2):
        if state.u[n - 1] != 1:
            continue
        if not state.z_min_reached[n - 1] and past(z[n - 1], params.theta_min(n)):
            raise skipped(f"z{n} passed theta{n}_min")
        if not state.z_max_reached[n - 1] and past(z[n - 1], params.theta_max(n)):
            raise skipped(f"z{n} passed theta{n}_max")
    for k in range(2):
        if not state.w_reached[k] and past(w[k], params.wait_threshold(k + 3)):
            raise skipped(f"w{k + 3} passed theta{k + 3}")


def next_event(
    state: HybridState,
    rates: FlowRates,
    params: ParameterVector,
    exogenous: Iterable[ScheduledEvent] = (),
    mode: SimulationMode = SimulationMode.FLUID,
    clock_events: bool = True,
    tie_tolerance: Optional[float] = None,
) -> Tuple[float, Tuple[PendingEvent, ...]]:
    """Earliest hitting time and the full set of events due then

    Args:
        state: Current state (right limit)
        rates: Rates constant until the returned time
        params: Thresholds
        exogenous: Scheduled arrivals, rate switches, departures and horizon
        mode: Fluid queues produce threshold hits; discrete ones change only at arrivals/departures
        clock_events: Whether GREEN/waiting clocks generate events
        tie_tolerance: Events within this of the earliest are simultaneous

    Returns:
        (dt, events) with events in deterministic sub-order; (inf, ()) if nothing is due
    """
    tie = config.tie_tolerance if tie_tolerance is None else tie_tolerance
    candidates: List[Tuple[float, PendingEvent]] = []

    if mode is SimulationMode.FLUID:
        for i in range(NUM_FLOWS):
            slope = queue_slope(state, i, rates)
            level = state.levels[i]
            x = state.x[i]
            s = params.queue_threshold(i + 1)
            flow = i + 1
            if level is QueueLevel.EMPTY:
                if slope > 0:
                    candidates.append((0.0, PendingEvent(EventKind.X_UP_ZERO, flow)))
            elif level is QueueLevel.LOW:
                if slope < 0:
                    candidates.append((max(x / -slope, 0.0), PendingEvent(EventKind.X_DOWN_ZERO, flow)))
                elif slope > 0:
                    candidates.append((max((s - x) / slope, 0.0), PendingEvent(EventKind.X_UP_THRESHOLD, flow)))
            elif slope < 0:
                candidates.append((max((x - s) / -slope, 0.0), PendingEvent(EventKind.X_DOWN_THRESHOLD, flow)))

    if clock_events:
        for n in (1, 2):
            if state.u[n - 1] != 1:
                continue
            z = state.z[n - 1]
            if not state.z_min_reached[n - 1]:
                candidates.append((max(params.theta_min(n) - z, 0.0), PendingEvent(EventKind.Z_MIN, n)))
            if not state.z_max_reached[n - 1]:
                candidates.append((max(params.theta_max(n) - z, 0.0), PendingEvent(EventKind.Z_MAX, n)))
        for k in range(2):
            flow = k + 3
            waiting = state.u[flow - 1] == 0 and state.levels[flow - 1] is not QueueLevel.EMPTY
            if waiting and not state.w_reached[k]:
                candidates.append(
                    (max(params.wait_threshold(flow) - state.w[k], 0.0), PendingEvent(EventKind.W_THRESHOLD, flow))
                )

    for event in exogenous:
        candidates.append((max(event.time - state.t, 0.0), PendingEvent(event.kind, event.flow)))

    if not candidates:
        return math.inf, ()
    dt = min(c[0] for c in candidates)
    due = sorted({c[1] for c in candidates if c[0] <= dt + tie}, key=event_order)
    return dt, tuple(due)


@dataclass(frozen=True)
class EventOutcome:
    """Result of resolving one event instant"""
    state: HybridState
    records: Tuple[EventRecord, ...]
    switches: int = 0
    suppressed: int = 0
    reversals: int = 0


class _Instant:
    """Mutable working copy of the state while one instant is resolved"""

    def __init__(self, state: HybridState, params: ParameterVector, rates: FlowRates,
                 base_index: int, mode: SimulationMode, policy: Policy, conflict_headway: float,
                 approach_time: float = 0.0):
        self.t = state.t
        self.x = list(state.x)
        self.z = list(state.z)
        self.w = list(state.w)
        self.u = tuple(state.u)
        self.levels = list(state.levels)
        self.z_min = list(state.z_min_reached)
        self.z_max = list(state.z_max_reached)
        self.w_reached = list(state.w_reached)
        self.ready = list(state.service_ready)
        self.last_served = state.last_served
        self.last_release = state.last_release
        self.params = params
        self.rates = rates
        self.mode = mode
        self.policy = policy
        self.headway = conflict_headway
        self.approach_time = approach_time
        self.queued = [list(q) for q in state.queue_arrivals]
        self.region, self.p = state.region, state.p
        self.records: List[EventRecord] = []
        self.index = base_index
        # record that last changed the level or wait flag of flows 3, 4
        self.p_cause: List[Optional[int]] = [None, None]

    @property
    def service_time(self) -> float:
        return 1.0 / self.rates.h

    def classify(self):
        return region_and_indicators(tuple(self.levels), tuple(self.w_reached))

    def emit(self, kind: EventKind, flow: int = 0, cause: Optional[int] = None,
             p_before: Optional[Tuple[int, int]] = None) -> int:
        region, p = self.classify()
        record = EventRecord(
            index=self.index,
            tau=self.t,
            kind=kind,
            flow=flow,
            x=tuple(self.x),
            z=tuple(self.z),
            w=tuple(self.w),
            u=self.u,
            region=region,
            p=p,
            region_before=self.region,
            p_before=self.p if p_before is None else p_before,
            alpha=self.rates.alpha,
            h=self.rates.h,
            cause=cause,
            levels=tuple(self.levels),
        )
        self.records.append(record)
        self.region, self.p = region, p
        self.index += 1
        return record.index

    @property
    def last_index(self) -> Optional[int]:
        return self.records[-1].index if self.records else None

    def _set_level(self, i: int, level: QueueLevel) -> None:
        self.levels[i] = level

    def _note_pedestrian(self, flow: int, index: int) -> None:
        if flow >= 3:
            self.p_cause[flow - 3] = index

    # -- primary events -------------------------------------------------

    def apply(self, event: PendingEvent) -> None:
        kind, flow = event.kind, event.flow
        params = self.params
        i = flow - 1
        if kind is EventKind.WINDOW_START:
            self.emit(kind)
        elif kind in _RATE_KINDS:
            self.emit(kind, flow)
        elif kind is EventKind.ARRIVAL:
            self._arrival(flow)
        elif kind is EventKind.DEPARTURE:
            self._departure(flow)
        elif kind is EventKind.X_DOWN_ZERO:
            self.x[i] = 0.0
            self._set_level(i, QueueLevel.EMPTY)
            self._note_pedestrian(flow, self.emit(kind, flow))
        elif kind is EventKind.X_UP_ZERO:
            self._set_level(i, QueueLevel.LOW)
            self._note_pedestrian(flow, self.emit(kind, flow))
        elif kind is EventKind.X_UP_THRESHOLD:
            self.x[i] = params.queue_threshold(flow)
            self._set_level(i, QueueLevel.HIGH)
            self._note_pedestrian(flow, self.emit(kind, flow))
        elif kind is EventKind.X_DOWN_THRESHOLD:
            self.x[i] = params.queue_threshold(flow)
            self._set_level(i, QueueLevel.LOW)
            self._note_pedestrian(flow, self.emit(kind, flow))
        elif kind is EventKind.Z_MIN:
            self.z[flow - 1] = params.theta_min(flow)
            self.z_min[flow - 1] = True
            self.emit(kind, flow)
        elif kind is EventKind.Z_MAX:
            self.z[flow - 1] = params.theta_max(flow)
            self.z_max[flow - 1] = True
            self.emit(kind, flow)
        elif kind is EventKind.W_THRESHOLD:
            self.w[flow - 3] = params.wait_threshold(flow)
            self.w_reached[flow - 3] = True
            self._note_pedestrian(flow, self.emit(kind, flow))
        else:
            raise ValueError(f"Cannot apply event kind {kind}")

    def _vehicle_ready_time(self, road: int) -> float:
        if self.last_served == 0:
            return self.last_release
        gap = self.service_time if self.last_served == road else self.headway
        return self.last_release + gap

    def _passes_through(self, i: int) -> bool:
        if self.u[i] != 1 or self.x[i] > 0:
            return False
        if i < 2 and self.approach_time > 0:
            return False
        if self.policy is Policy.BASELINE:
            if i >= 2:
                return False
            other = 1 - i
            if self.u[other] == 1 and self.x[other] > 0:
                return False
            return self.t >= self._vehicle_ready_time(i + 1)
        return self.t >= self.ready[i]

    def _arrival(self, flow: int) -> None:
        i = flow - 1
        s = self.params.queue_threshold(flow)
        if self._passes_through(i):
            if self.policy is Policy.BASELINE:
                self.last_release, self.last_served = self.t, flow
            else:
                self.ready[i] = self.t + self.service_time
            self.emit(EventKind.ARRIVAL, flow)
            return
        old_level = self.levels[i]
        if self.x[i] == 0 and self.ready[i] <= self.t:
            self.ready[i] = self.t + self.service_time
        self.x[i] += 1
        self.queued[i].append(self.t)
        new_level = queue_level(self.x[i], s)
        self._set_level(i, new_level)
        index = self.emit(EventKind.ARRIVAL, flow)
        if old_level is QueueLevel.EMPTY:
            self._note_pedestrian(flow, self.emit(EventKind.X_UP_ZERO, flow, cause=index))
        if new_level is QueueLevel.HIGH and old_level is not QueueLevel.HIGH:
            self._note_pedestrian(flow, self.emit(EventKind.X_UP_THRESHOLD, flow, cause=index))

    def _departure(self, flow: int) -> None:
        i = flow - 1
        s = self.params.queue_threshold(flow)
        old_level = self.levels[i]
        self.x[i] = max(self.x[i] - 1, 0)
        if self.queued[i]:
            self.queued[i].pop(0)
        if self.policy is Policy.BASELINE and i < 2:
            self.last_release, self.last_served = self.t, flow
        else:
            self.ready[i] = self.t + self.service_time
        new_level = queue_level(self.x[i], s)
        self._set_level(i, new_level)
        index = self.emit(EventKind.DEPARTURE, flow)
        if old_level is QueueLevel.HIGH and new_level is not QueueLevel.HIGH:
            self._note_pedestrian(flow, self.emit(EventKind.X_DOWN_THRESHOLD, flow, cause=index))
        if new_level is QueueLevel.EMPTY:
            self._note_pedestrian(flow, self.emit(EventKind.X_DOWN_ZERO, flow, cause=index))

    # -- derived events -------------------------------------------------

    def start_fluid_periods(self, cause_for_flow) -> None:
        """Queues facing RED with positive inflow leave zero at t+"""
        if self.mode is not SimulationMode.FLUID:
            return
        for i in range(NUM_FLOWS):
            if self.levels[i] is QueueLevel.EMPTY and self.u[i] == 0 and self.rates.alpha[i] > 0:
                self._set_level(i, QueueLevel.LOW)
                index = self.emit(EventKind.X_UP_ZERO, i + 1, cause=cause_for_flow(i + 1))
                self._note_pedestrian(i + 1, index)

    def emit_indicator_changes(self, p_start: Tuple[int, int], default_cause: Optional[int]) -> None:
        _, p_now = self.classify()
        for k in range(2):
            if p_now[k] != p_start[k]:
                kind = EventKind.P_UP if p_now[k] == 1 else EventKind.P_DOWN
                cause = self.p_cause[k] if self.p_cause[k] is not None else default_cause
                before = list(self.p)
                before[k] = p_start[k]
                self.emit(kind, k + 3, cause=cause, p_before=tuple(before))

    # -- control --------------------------------------------------------

    def decide(self):
        if self.policy is Policy.BASELINE:
            occupied = tuple(0.0 if lv is QueueLevel.EMPTY else 1.0 for lv in self.levels)
            return baseline_decision(occupied, self.u, self.last_index)
        region, p = self.classify()
        return control_decision(region, p, self.z, self.params, self.u[0], self.last_index)

    def switch(self, decision) -> int:
        """Apply a light change atomically; returns the switch record index"""
        old = self.u
        new = decision.lights
        p_start = self.classify()[1]
        self.u = tuple(new)
        for i in range(NUM_FLOWS):
            if old[i] == 0 and new[i] == 1:
                self.ready[i] = self.t + self.service_time
        if self.policy is Policy.QUASI_DYNAMIC:
            red_road = 1 if old[0] == 1 else 2
            green_road = 3 - red_road
            self.z[red_road - 1] = 0.0
            self.z_min[red_road - 1] = self.z_max[red_road - 1] = False
            self.z[green_road - 1] = 0.0
            self.z_min[green_road - 1], self.z_max[green_road - 1] = _clock_flags(green_road, 0.0, self.params)
            for k in range(2):
                if old[k + 2] == 0 and new[k + 2] == 1:
                    self.w[k] = 0.0
                    self.w_reached[k] = False
            index = self.emit(EventKind.G2R, red_road, cause=decision.triggering_event)
        else:
            index = None
            for n in (1, 2):
                if old[n - 1] != new[n - 1]:
                    kind = EventKind.G2R if new[n - 1] == 0 else EventKind.R2G
                    index = self.emit(kind, n, cause=decision.triggering_event)
        self.p_cause = [index, index]
        self.emit_indicator_changes(p_start, index)
        self.start_fluid_periods(lambda flow: index)
        return index

    def to_state(self) -> HybridState:
        region, p = self.classify()
        return HybridState(
            t=self.t,
            x=tuple(self.x),
            z=tuple(self.z),
            w=tuple(self.w),
            u=self.u,
            levels=tuple(self.levels),
            region=region,
            p=p,
            z_min_reached=tuple(self.z_min),
            z_max_reached=tuple(self.z_max),
            w_reached=tuple(self.w_reached),
            service_ready=tuple(self.ready),
            last_served=self.last_served,
            last_release=self.last_release,
            queue_arrivals=tuple(tuple(q) for q in self.queued),
        )


def apply_event(
    state: HybridState,
    events: Sequence[PendingEvent],
    params: ParameterVector,
    rates: FlowRates,
    policy: Policy = Policy.QUASI_DYNAMIC,
    mode: SimulationMode = SimulationMode.FLUID,
    base_index: int = 0,
    conflict_headway: float = DEFAULT_CONFLICT_HEADWAY,
    max_switches: Optional[int] = None,
    approach_time: float = 0.0,
) -> EventOutcome:
    """Resolve one event instant: update states, re-evaluate control, switch lights

    Args:
        state: State at the instant, before any event is applied
        events: Simultaneous events in sub-order
        params: Controllable parameters
        rates: Rates in force after the instant (exact or windowed estimates)
        policy: Quasi-dynamic control or the uncontrolled baseline
        mode: Fluid or discrete queues
        base_index: Index given to the first emitted record
        conflict_headway: Baseline headway between vehicles of different roads
        max_switches: Light switches allowed at this instant
        approach_time: Detection-to-stop-line travel time of discrete vehicles

    Returns:
        EventOutcome with the post-instant state and the emitted records
    """
    limit = config.max_switches_per_instant if max_switches is None else max_switches
    instant = _Instant(state, params, rates, base_index, mode, policy, conflict_headway, approach_time)
    p_start = state.p
    horizon = False
    rate_record = {}

    for event in sorted(events, key=event_order):
        if event.kind is EventKind.HORIZON_END:
            horizon = True
            continue
        instant.apply(event)
        if event.kind in _RATE_KINDS:
            rate_record[event.flow] = instant.last_index

    instant.start_fluid_periods(lambda flow: rate_record.get(flow))
    instant.emit_indicator_changes(p_start, instant.last_index)

    switches = suppressed = reversals = 0
    previous_lights = None
    while True:
        decision = instant.decide()
        if not decision.switch_now:
            break
        if switches >= limit:
            suppressed += 1
            break
        if previous_lights is not None and decision.lights == previous_lights:
            reversals += 1
        previous_lights = instant.u
        instant.switch(decision)
        switches += 1

    if horizon:
        instant.emit(EventKind.HORIZON_END)

    return EventOutcome(
        state=instant.to_state(),
        records=tuple(instant.records),
        switches=switches,
        suppressed=suppressed,
        reversals=reversals,
    )


def reclassify(state: HybridState, params: ParameterVector, mode: SimulationMode,
               policy: Policy = Policy.QUASI_DYNAMIC) -> HybridState:
    """Recompute levels and clock flags after a parameter change"""
    levels = []
    for i in range(NUM_FLOWS):
        s = params.queue_threshold(i + 1)
        if mode is SimulationMode.FLUID and state.levels[i] is QueueLevel.EMPTY:
            levels.append(QueueLevel.EMPTY)
        elif mode is SimulationMode.FLUID:
            levels.append(QueueLevel.HIGH if state.x[i] >= s else QueueLevel.LOW)
        else:
            levels.append(queue_level(state.x[i], s))
    z_min, z_max = [False, False], [False, False]
    for n in (1, 2):
        if policy is Policy.BASELINE:
            z_min[n - 1] = z_max[n - 1] = True
        elif state.u[n - 1] == 1:
            z_min[n - 1], z_max[n - 1] = _clock_flags(n, state.z[n - 1], params)
    w_reached = tuple(state.w[k] >= params.wait_threshold(k + 3) for k in range(2))
    region, p = region_and_indicators(tuple(levels), w_reached)
    return replace(
        state,
        levels=tuple(levels),
        region=region,
        p=p,
        z_min_reached=tuple(z_min),
        z_max_reached=tuple(z_max),
        w_reached=w_reached,
    )


@dataclass
class EventTrace:
    """Ordered event records of one sample path (or one window of it)"""
    records: List[EventRecord]
    t0: float
    t_end: float
    mode: SimulationMode
    policy: Policy
    params: ParameterVector
    weights: Tuple[float, float, float, float]
    seed: int
    arrivals: Tuple[Tuple[float, ...], ...] = ()
    rate_window: float = 60.0
    cost: float = 0.0
    diagnostics: TraceDiagnostics = field(default_factory=TraceDiagnostics)

    @property
    def horizon(self) -> float:
        return self.t_end - self.t0

    def nep_intervals(self, flow: int) -> List[Tuple[float, float]]:
        """Non-empty periods [xi, eta) of one flow, truncated at t_end"""
        i = flow - 1
        intervals = []
        start = None
        for record in self.records:
            if record.kind is EventKind.WINDOW_START and start is None and record.levels[i] is not QueueLevel.EMPTY:
                start = record.tau
            elif record.kind is EventKind.X_UP_ZERO and record.flow == flow and start is None:
                start = record.tau
            elif record.kind is EventKind.X_DOWN_ZERO and record.flow == flow and start is not None:
                intervals.append((start, record.tau))
                start = None
        if start is not None:
            intervals.append((start, self.t_end))
        return [iv for iv in intervals if iv[1] > iv[0]]

    def kind_signature(self) -> Tuple[Tuple[str, int], ...]:
        """Event kinds in order, without exogenous noise records"""
        return tuple(
            (r.kind.value, r.flow) for r in self.records if r.kind not in EXOGENOUS_NOISE_KINDS
        )

    def switches_per_100s(self) -> float:
        if self.horizon <= 0:
            return 0.0
        return 100.0 * self.diagnostics.switches / self.horizon


def cost_of_trace(trace: EventTrace, weights: Optional[Sequence[float]] = None, T: Optional[float] = None) -> float:
    """Weighted time-average queue content over the trace

    Fluid contents are piecewise linear between records and integrated
    with the trapezoid rule; discrete contents are piecewise constant.
    """
    weights = tuple(trace.weights if weights is None else weights)
    horizon = trace.horizon if T is None else T
    if horizon <= 0 or len(trace.records) < 2:
        return 0.0
    fluid = trace.mode is SimulationMode.FLUID
    total = 0.0
    records = trace.records
    for a, b in zip(records, records[1:]):
        dt = b.tau - a.tau
        if dt <= 0:
            continue
        for i in range(NUM_FLOWS):
            if weights[i] == 0:
                continue
            if fluid:
                total += weights[i] * 0.5 * (a.x[i] + b.x[i]) * dt
            else:
                total += weights[i] * a.x[i] * dt
    return total / horizon


def mean_wait_of_trace(trace: EventTrace, weights: Optional[Sequence[float]] = None) -> float:
    """Weighted mean time an arrival spends queued (Little's law)

    Queue area over the trace divided by the weighted number of arrivals;
    discrete arrivals are counted from the input history, fluid ones are
    the integral of the arrival rates in force between records.
    """
    weights = tuple(trace.weights if weights is None else weights)
    if trace.horizon <= 0 or len(trace.records) < 2:
        return 0.0
    area = cost_of_trace(trace, weights) * trace.horizon
    arrived = 0.0
    if trace.mode is SimulationMode.FLUID:
        for a, b in zip(trace.records, trace.records[1:]):
            dt = b.tau - a.tau
            if dt > 0:
                arrived += sum(weights[i] * a.alpha[i] * dt for i in range(NUM_FLOWS))
    else:
        for i, times in enumerate(trace.arrivals):
            arrived += weights[i] * sum(1 for t in times if trace.t0 <= t < trace.t_end)
    return area / arrived if arrived > 0 else 0.0


class IntersectionSimulator:
    """One continuous sample path of the intersection

    The path is advanced with run_until; each call returns the trace of the
    new segment, so an online optimiser can change parameters between
    windows without restarting the path.
    """

    def __init__(
        self,
        spec: ArrivalProcessSpec,
        params: ParameterVector,
        h: float = DEFAULT_DEPARTURE_RATE,
        policy: Policy = Policy.QUASI_DYNAMIC,
        weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
        conflict_headway: float = DEFAULT_CONFLICT_HEADWAY,
        settings: Optional[Config] = None,
    ):
        self.spec = spec
        self.params = params
        self.h = h
        self.policy = policy
        self.weights = tuple(float(v) for v in weights)
        self.conflict_headway = conflict_headway
        self.settings = settings or config
        self.mode = spec.mode
        self.approach_time = spec.approach_time if spec.mode is SimulationMode.DISCRETE else 0.0
        self.inputs = ExogenousInputs(spec)
        self.state = initial_state(params, policy)
        self.events_total = 0
        self._alpha_off = [False] * NUM_FLOWS
        self._last_arrival = [0.0] * NUM_FLOWS

    # -- rates ----------------------------------------------------------

    def _capacity(self, state: HybridState) -> Tuple[float, float, float, float]:
        if self.policy is Policy.BASELINE and self.mode is SimulationMode.FLUID:
            competing = all(
                state.u[i] == 1 and state.levels[i] is not QueueLevel.EMPTY for i in (0, 1)
            )
            if competing:
                shared = 1.0 / (2.0 * self.conflict_headway)
                return (shared, shared, self.h, self.h)
        return (self.h,) * NUM_FLOWS

    def _interval_rates(self, state: HybridState) -> FlowRates:
        return FlowRates(alpha=self.inputs.rates(), h=self.h, capacity=self._capacity(state))

    def _record_rates(self, state: HybridState) -> FlowRates:
        if self.mode is SimulationMode.FLUID:
            return FlowRates(alpha=self.inputs.rates(), h=self.h, capacity=self._capacity(state))
        return FlowRates(alpha=self.inputs.windowed_rates(state.t, self.spec.rate_window), h=self.h)

    # -- scheduling -----------------------------------------------------

    def _at_stop_line(self, state: HybridState, i: int) -> float:
        """Earliest time the head of queue i can reach the stop line"""
        if i >= 2 or not state.queue_arrivals[i]:
            return -math.inf
        return state.queue_arrivals[i][0] + self.approach_time

    def _departures(self, state: HybridState) -> List[ScheduledEvent]:
        events = []
        t = state.t
        for i in range(NUM_FLOWS):
            if state.x[i] <= 0 or state.u[i] != 1:
                continue
            if self.policy is Policy.BASELINE and i < 2:
                continue
            due = max(state.service_ready[i], t, self._at_stop_line(state, i))
            events.append(ScheduledEvent(due, EventKind.DEPARTURE, i + 1))
        if self.policy is Policy.BASELINE:
            eligible = [n for n in (1, 2) if state.u[n - 1] == 1 and state.x[n - 1] > 0]
            if len(eligible) == 2:
                road = 2 if state.last_served == 1 else 1
                gap = self.conflict_headway if state.last_served != 0 else 0.0
                ready = state.last_release + gap
            elif eligible:
                road = eligible[0]
                if state.last_served == 0:
                    ready = t
                else:
                    gap = 1.0 / self.h if state.last_served == road else self.conflict_headway
                    ready = state.last_release + gap
            if eligible:
                due = max(ready, t, self._at_stop_line(state, road - 1))
                events.append(ScheduledEvent(due, EventKind.DEPARTURE, road))
        return events

    def _schedule(self, state: HybridState, t_end: float) -> List[ScheduledEvent]:
        events = [ScheduledEvent(t_end, EventKind.HORIZON_END)]
        events.extend(e for e in self.inputs.upcoming() if e.time <= t_end)
        if self.mode is SimulationMode.DISCRETE:
            events.extend(e for e in self._departures(state) if e.time <= t_end)
            window = self.spec.rate_window
            for i in range(NUM_FLOWS):
                if self.spec.mean_rates[i] > 0 and not self._alpha_off[i]:
                    due = self._last_arrival[i] + window
                    if due <= t_end:
                        events.append(ScheduledEvent(due, EventKind.ALPHA_DOWN_ZERO, i + 1))
        return events

    # -- main loop ------------------------------------------------------

    def run_until(self, t_end: float, params: Optional[ParameterVector] = None) -> EventTrace:
        """Advance the path to t_end and return the trace of [t_now, t_end]

        Args:
            t_end: Segment end (s)
            params: Parameters for this segment; levels and clock flags are
                reclassified against them at the segment start

        Raises:
            NonconvergenceError: Event budget exhausted or an instant never settles
        """
        if params is not None and params != self.params:
            self.params = params
            self.state = reclassify(self.state, params, self.mode, self.policy)
        params = self.params
        settings = self.settings
        t0 = self.state.t
        if t_end < t0:
            raise ValueError(f"t_end={t_end} is before the current time {t0}")

        diagnostics = TraceDiagnostics()
        records: List[EventRecord] = []
        clock_events = self.policy is Policy.QUASI_DYNAMIC

        same_instant = settings.tie_tolerance * 10 + 1e-12
        # switch budget is shared by every instant resolved at one timestamp
        burst_time, burst_switches = t0, 0

        outcome = apply_event(
            self.state, (PendingEvent(EventKind.WINDOW_START),), params, self._record_rates(self.state),
            self.policy, self.mode, 0, self.conflict_headway, settings.max_switches_per_instant,
            self.approach_time,
        )
        self._absorb(outcome, records, diagnostics)
        burst_switches += outcome.switches

        zero_steps = 0
        while True:
            state = self.state
            scheduled = self._schedule(state, t_end)
            rates = self._interval_rates(state)
            dt, pending = next_event(
                state, rates, params, scheduled, self.mode, clock_events, settings.tie_tolerance
            )
            if not pending:
                break
            pending_keys = {(e.kind, e.flow) for e in pending}
            target = None
            for event in scheduled:
                if (event.kind, event.flow) in pending_keys and event.kind is not EventKind.DEPARTURE:
                    target = event.time if target is None else max(target, event.time)
            if EventKind.HORIZON_END in {e.kind for e in pending}:
                target = t_end
                dt = t_end - state.t

            state = advance(state, dt, rates, params, self.mode, settings.zero_tolerance)
            if target is not None and abs(state.t - target) <= same_instant:
                state = replace(state, t=target)
            if dt == 0:
                zero_steps += 1
                if zero_steps > _MAX_ZERO_STEPS:
                    raise NonconvergenceError(
                        f"Instant t={state.t} does not settle", events=self.events_total, time=state.t
                    )
            else:
                zero_steps = 0

            if state.t - burst_time > same_instant:
                burst_time, burst_switches = state.t, 0
            budget = max(settings.max_switches_per_instant - burst_switches, 0)

            pending = self._consume(pending, scheduled, state.t)
            outcome = apply_event(
                state, pending, params, self._record_rates(state), self.policy, self.mode,
                len(records), self.conflict_headway, budget, self.approach_time,
            )
            self._absorb(outcome, records, diagnostics)
            burst_switches += outcome.switches

            if self.events_total > settings.max_events:
                raise NonconvergenceError(
                    f"More than {settings.max_events} events before t={t_end}",
                    events=self.events_total, time=self.state.t,
                )
            if any(e.kind is EventKind.HORIZON_END for e in pending):
                break

        trace = EventTrace(
            records=records,
            t0=t0,
            t_end=t_end,
            mode=self.mode,
            policy=self.policy,
            params=params,
            weights=self.weights,
            seed=self.spec.seed,
            arrivals=tuple(tuple(h) for h in self.inputs.history),
            rate_window=self.spec.rate_window,
            diagnostics=diagnostics,
        )
        trace.cost = cost_of_trace(trace)
        if trace.switches_per_100s() > settings.chattering_threshold:
            logger.debug(
                f"Chattering path: {trace.switches_per_100s():.1f} switches per 100 s "
                f"(seed {self.spec.seed}, t={t0}..{t_end})"
            )
        return trace

    def _consume(self, pending, scheduled, t: float) -> Tuple[PendingEvent, ...]:
        by_key = {(e.kind, e.flow): e for e in scheduled}
        extra = []
        for event in pending:
            key = (event.kind, event.flow)
            if event.kind is EventKind.ARRIVAL:
                self.inputs.consume(by_key[key])
                i = event.flow - 1
                self._last_arrival[i] = t
                if self._alpha_off[i]:
                    self._alpha_off[i] = False
                    extra.append(PendingEvent(EventKind.ALPHA_UP_ZERO, event.flow))
            elif event.kind in _RATE_KINDS:
                if self.mode is SimulationMode.FLUID:
                    self.inputs.consume(by_key[key])
                elif event.kind is EventKind.ALPHA_DOWN_ZERO:
                    self._alpha_off[event.flow - 1] = True
        return tuple(sorted(tuple(pending) + tuple(extra), key=event_order))

    def _absorb(self, outcome: EventOutcome, records: List[EventRecord], diagnostics: TraceDiagnostics) -> None:
        self.state = outcome.state
        records.extend(outcome.records)
        self.events_total += len(outcome.records)
        diagnostics.events += len(outcome.records)
        diagnostics.switches += outcome.switches
        diagnostics.chattering += outcome.suppressed
        if outcome.reversals:
            diagnostics.extra["reversals"] = diagnostics.extra.get("reversals", 0) + outcome.reversals


def run_sample_path(
    spec: ArrivalProcessSpec,
    params: ParameterVector,
    T: float,
    policy: Policy = Policy.QUASI_DYNAMIC,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
    h: float = DEFAULT_DEPARTURE_RATE,
    conflict_headway: float = DEFAULT_CONFLICT_HEADWAY,
    settings: Optional[Config] = None,
) -> EventTrace:
    """Simulate [0, T] from the empty initial state

    Args:
        spec: Arrival processes and master seed
        params: Controllable parameters
        T: Horizon (s)
        policy: quasi-dynamic or baseline
        weights: Cost weight per flow
        h: Maximum departure rate H
        conflict_headway: Baseline headway between vehicles of different roads
        settings: Runtime settings (guards, tolerances)

    Returns:
        EventTrace with its cost L filled in
    """
    if T <= 0:
        raise ValueError(f"Horizon must be positive, got {T}")
    simulator = IntersectionSimulator(
        spec, params, h=h, policy=policy, weights=weights,
        conflict_headway=conflict_headway, settings=settings,
    )
    trace = simulator.run_until(T)
    logger.debug(
        f"Path seed={spec.seed} mode={spec.mode.value} policy={policy.value} "
        f"T={T} events={len(trace.records)} L={trace.cost:.4f}"
    )
    return trace
