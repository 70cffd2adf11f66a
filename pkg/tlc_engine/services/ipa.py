"""
Infinitesimal perturbation analysis of event traces for TLC Engine

The estimator walks a recorded trace once, carrying the derivative of every
state variable with respect to the ten controllable parameters, and
integrates the queue derivatives over non-empty periods to obtain dL/dv.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import config
from ..core.models import (
    NUM_FLOWS,
    NUM_PARAMETERS,
    EventKind,
    EventRecord,
    GradientReport,
    QueueLevel,
    SimulationMode,
)
from .arrivals import estimate_arrival_rate
from .simulator import EventTrace, cost_of_trace

logger = logging.getLogger(__name__)

_SWITCH_KINDS = (EventKind.G2R, EventKind.R2G)
_INHERITING_KINDS = (EventKind.P_UP, EventKind.P_DOWN, EventKind.G2R, EventKind.R2G)
_SEGMENT_BOUNDARIES = _SWITCH_KINDS + (EventKind.WINDOW_START, EventKind.HORIZON_END)


def clock_min_index(road: int) -> int:
    """0-based position of theta_n^min"""
    return 2 * (road - 1)


def clock_max_index(road: int) -> int:
    return 2 * (road - 1) + 1


def wait_index(flow: int) -> int:
    """0-based position of theta_3 / theta_4"""
    return flow + 1


def threshold_index(flow: int) -> int:
    """0-based position of s_n"""
    return flow + 5


def _unit(index: int) -> np.ndarray:
    e = np.zeros(NUM_PARAMETERS)
    e[index] = 1.0
    return e


@dataclass(frozen=True)
class RateEstimate:
    """Arrival rates at an event time and the constant departure rate H"""
    alpha_hat: Tuple[float, float, float, float]
    h: float


@dataclass
class DerivativeState:
    """Parameter derivatives of the hybrid state, constant between events"""
    x_prime: np.ndarray = field(default_factory=lambda: np.zeros((NUM_FLOWS, NUM_PARAMETERS)))
    z_prime: np.ndarray = field(default_factory=lambda: np.zeros((2, NUM_PARAMETERS)))
    w_prime: np.ndarray = field(default_factory=lambda: np.zeros((2, NUM_PARAMETERS)))
    last_switch_tau_prime: np.ndarray = field(default_factory=lambda: np.zeros(NUM_PARAMETERS))
    nep_open: List[bool] = field(default_factory=lambda: [False] * NUM_FLOWS)
    u: Tuple[int, int, int, int] = (1, 0, 0, 1)
    # event-time derivatives of the records at the current instant
    tau_primes: Dict[int, np.ndarray] = field(default_factory=dict)
    switch_records: set = field(default_factory=set)
    instant: Optional[float] = None
    degenerate_count: int = 0

    def tau_prime_of(self, index: Optional[int]) -> np.ndarray:
        if index is None:
            return np.zeros(NUM_PARAMETERS)
        return self.tau_primes.get(index, np.zeros(NUM_PARAMETERS))

    def enter_instant(self, tau: float) -> None:
        if self.instant != tau:
            self.instant = tau
            self.tau_primes.clear()
            self.switch_records.clear()


def _hitting_derivative(numerator: np.ndarray, denominator: float, d: DerivativeState,
                        threshold: float) -> np.ndarray:
    if abs(denominator) < threshold:
        d.degenerate_count += 1
        return np.zeros(NUM_PARAMETERS)
    return numerator / denominator


def _slope(d: DerivativeState, i: int, rates: RateEstimate) -> float:
    """Rate of change of a non-empty queue under the lights in force before the event"""
    alpha = rates.alpha_hat[i]
    return alpha - rates.h if d.u[i] == 1 else alpha


def event_time_derivative(
    event: EventRecord,
    d: DerivativeState,
    rates: RateEstimate,
    degenerate_threshold: Optional[float] = None,
) -> np.ndarray:
    """dtau/dv of one event

    Clock hits inherit the derivative of the last light switch, queue
    threshold hits follow from the implicit equation x(tau) = s, compound
    events and switches inherit from the record that caused them, and
    exogenous events contribute zero.

    Args:
        event: Record being processed
        d: Derivatives holding just before the event
        rates: Rates in force over the interval ending at the event
        degenerate_threshold: Denominators below this give tau' = 0

    Returns:
        10-vector tau'
    """
    threshold = config.degenerate_threshold if degenerate_threshold is None else degenerate_threshold
    kind, flow = event.kind, event.flow
    i = flow - 1

    if kind is EventKind.Z_MAX:
        return _unit(clock_max_index(flow)) + d.last_switch_tau_prime
    if kind is EventKind.Z_MIN:
        return _unit(clock_min_index(flow)) + d.last_switch_tau_prime
    if kind is EventKind.W_THRESHOLD:
        return _unit(wait_index(flow)) - d.w_prime[flow - 3]
    if kind in (EventKind.X_DOWN_THRESHOLD, EventKind.X_UP_THRESHOLD):
        numerator = _unit(threshold_index(flow)) - d.x_prime[i]
        return _hitting_derivative(numerator, _slope(d, i, rates), d, threshold)
    if kind is EventKind.X_DOWN_ZERO:
        return _hitting_derivative(-d.x_prime[i], _slope(d, i, rates), d, threshold)
    if kind in _INHERITING_KINDS:
        return d.tau_prime_of(event.cause).copy()
    if kind is EventKind.X_UP_ZERO and event.cause in d.switch_records:
        return d.tau_prime_of(event.cause).copy()
    return np.zeros(NUM_PARAMETERS)


def update_state_derivatives(
    event: EventRecord,
    tau_prime: np.ndarray,
    rates: RateEstimate,
    d: DerivativeState,
    mode: SimulationMode = SimulationMode.FLUID,
    switch_wait_derivative: bool = False,
) -> DerivativeState:
    """Apply the jump conditions of one event to the derivative state (in place)"""
    kind, flow = event.kind, event.flow
    i = flow - 1
    d.tau_primes[event.index] = tau_prime

    if kind is EventKind.WINDOW_START:
        d.x_prime[:] = 0.0
        d.z_prime[:] = 0.0
        d.w_prime[:] = 0.0
        d.last_switch_tau_prime = np.zeros(NUM_PARAMETERS)
        if event.levels:
            d.nep_open = [lv is not QueueLevel.EMPTY for lv in event.levels]
        else:
            d.nep_open = [v > 0 for v in event.x]
        d.u = tuple(event.u)
    elif kind is EventKind.HORIZON_END:
        d.nep_open = [False] * NUM_FLOWS
    elif kind is EventKind.X_UP_ZERO:
        if event.cause in d.switch_records:
            d.x_prime[i] = -rates.alpha_hat[i] * tau_prime
        elif not d.nep_open[i]:
            d.x_prime[i] = 0.0
        d.nep_open[i] = True
        if flow >= 3 and d.u[i] == 0:
            d.w_prime[flow - 3] = -tau_prime if switch_wait_derivative else 0.0
    elif kind is EventKind.X_DOWN_ZERO:
        d.x_prime[i] = 0.0
        d.nep_open[i] = False
    elif kind in _SWITCH_KINDS:
        _apply_switch(event, tau_prime, rates, d, mode, switch_wait_derivative)

    for n in range(NUM_FLOWS):
        if not d.nep_open[n]:
            d.x_prime[n] = 0.0
    return d


def _apply_switch(event: EventRecord, tau_prime: np.ndarray, rates: RateEstimate, d: DerivativeState,
                  mode: SimulationMode, switch_wait_derivative: bool) -> None:
    old, new = d.u, tuple(event.u)
    for n in range(NUM_FLOWS):
        if old[n] == new[n]:
            continue
        going_green = new[n] == 1
        if mode is SimulationMode.DISCRETE and event.x[n] <= 0:
            if not going_green and rates.alpha_hat[n] > 0:
                # fluid view: the empty queue starts filling at the switch
                d.nep_open[n] = True
                d.x_prime[n] = -rates.alpha_hat[n] * tau_prime
            elif going_green and d.nep_open[n]:
                d.nep_open[n] = False
                d.x_prime[n] = 0.0
        elif d.nep_open[n]:
            if going_green:
                d.x_prime[n] = d.x_prime[n] + rates.h * tau_prime
            else:
                d.x_prime[n] = d.x_prime[n] - rates.h * tau_prime

    if event.kind is EventKind.G2R and new[0] != new[1]:
        green = 0 if new[0] == 1 else 1
        d.z_prime[green] = -tau_prime
        d.z_prime[1 - green] = 0.0

    for k in range(2):
        n = k + 2
        if old[n] == new[n]:
            continue
        if new[n] == 1:
            d.w_prime[k] = 0.0
        elif d.nep_open[n] and event.x[n] > 0:
            d.w_prime[k] = -tau_prime if switch_wait_derivative else 0.0

    d.last_switch_tau_prime = tau_prime.copy()
    d.switch_records.add(event.index)
    d.u = new


@dataclass
class CostAccumulator:
    """Running integral of x' over non-empty periods, per flow"""
    t0: float
    literal_indexing: bool = False
    integral: np.ndarray = field(default_factory=lambda: np.zeros((NUM_FLOWS, NUM_PARAMETERS)))
    segment_start: List[float] = field(default_factory=list)
    first_segment: List[bool] = field(default_factory=list)

    def __post_init__(self):
        self.segment_start = [self.t0] * NUM_FLOWS
        self.first_segment = [True] * NUM_FLOWS

    def gradient(self, weights: Sequence[float], horizon: float) -> np.ndarray:
        if horizon <= 0:
            return np.zeros(NUM_PARAMETERS)
        return np.asarray(weights, dtype=float) @ self.integral / horizon


def accumulate_cost_derivative(
    acc: CostAccumulator,
    event: EventRecord,
    x_prime_before: np.ndarray,
    d: DerivativeState,
) -> CostAccumulator:
    """Close the running x' segment of every flow the event touches

    Each segment contributes its length times the derivative held on it;
    with literal indexing, inner segments use the value after their closing
    event instead.
    """
    for n in range(NUM_FLOWS):
        if event.flow != n + 1 and event.kind not in _SEGMENT_BOUNDARIES:
            continue
        length = event.tau - acc.segment_start[n]
        if length > 0:
            closing = event.kind in (EventKind.X_DOWN_ZERO, EventKind.HORIZON_END)
            if acc.literal_indexing and not acc.first_segment[n] and not closing:
                value = d.x_prime[n]
            else:
                value = x_prime_before[n]
            acc.integral[n] += value * length
            acc.first_segment[n] = False
        acc.segment_start[n] = event.tau
        if event.kind in (EventKind.X_UP_ZERO, EventKind.WINDOW_START):
            acc.first_segment[n] = True
    return acc


def ipa_gradient(
    trace: EventTrace,
    weights: Optional[Sequence[float]] = None,
    t_w: Optional[float] = None,
    literal_cost_indexing: bool = False,
    switch_wait_derivative: bool = False,
    degenerate_threshold: Optional[float] = None,
) -> GradientReport:
    """IPA estimate of dL/dv from one trace

    Args:
        trace: Complete trace (WINDOW_START ... HORIZON_END)
        weights: Cost weight per flow (defaults to the trace's)
        t_w: Rate-estimation window for discrete traces; None keeps the
            estimates recorded during simulation
        literal_cost_indexing: Integrate inner segments with the post-event derivative
        switch_wait_derivative: Give a waiting clock that starts at a light switch w' = -tau'; by default w' = 0
        degenerate_threshold: Guard for near-zero hitting-time denominators

    Returns:
        GradientReport with the gradient, the trace cost and diagnostics
    """
    weights = tuple(trace.weights if weights is None else weights)
    discrete = trace.mode is SimulationMode.DISCRETE
    reestimate = discrete and t_w is not None and t_w != trace.rate_window and bool(trace.arrivals)

    d = DerivativeState()
    acc = CostAccumulator(t0=trace.t0, literal_indexing=literal_cost_indexing)
    interval_alpha = trace.records[0].alpha if trace.records else (0.0,) * NUM_FLOWS
    last_alpha = interval_alpha

    for record in trace.records:
        if d.instant != record.tau:
            interval_alpha = last_alpha
        d.enter_instant(record.tau)

        if reestimate:
            alpha_now = tuple(
                estimate_arrival_rate(trace.arrivals[n], record.tau, t_w) for n in range(NUM_FLOWS)
            )
            hitting_rates = RateEstimate(alpha_now, record.h)
            jump_rates = hitting_rates
        elif discrete:
            hitting_rates = RateEstimate(record.alpha, record.h)
            jump_rates = hitting_rates
        else:
            hitting_rates = RateEstimate(interval_alpha, record.h)
            jump_rates = RateEstimate(record.alpha, record.h)

        x_prime_before = d.x_prime.copy()
        tau_prime = event_time_derivative(record, d, hitting_rates, degenerate_threshold)
        update_state_derivatives(record, tau_prime, jump_rates, d, trace.mode, switch_wait_derivative)
        accumulate_cost_derivative(acc, record, x_prime_before, d)
        last_alpha = record.alpha

    grad = acc.gradient(weights, trace.horizon)
    if d.degenerate_count:
        logger.debug(f"{d.degenerate_count} degenerate event-time derivatives zeroed (seed {trace.seed})")
    return GradientReport(
        grad=[float(v) for v in grad],
        cost=cost_of_trace(trace, weights),
        degenerate_count=d.degenerate_count,
        events_processed=len(trace.records),
    )
