"""
Exogenous arrival processes for TLC Engine
"""

import logging
import math
from bisect import bisect_left, bisect_right
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.models import (
    NUM_FLOWS,
    ArrivalProcessSpec,
    EventKind,
    ScheduledEvent,
    SimulationMode,
)

logger = logging.getLogger(__name__)


def flow_generators(seed: int) -> List[np.random.Generator]:
    """One independent stream per flow, derived from the master seed

    Arrival paths depend only on (seed, flow), never on the control
    parameters, so perturbed evaluations share random numbers.
    """
    children = np.random.SeedSequence(int(seed)).spawn(NUM_FLOWS)
    return [np.random.default_rng(child) for child in children]


def _perturbation_boundaries(spec: ArrivalProcessSpec, flow: int) -> List[float]:
    times = set()
    for p in spec.perturbations:
        if p.flow == flow:
            times.add(p.start)
            times.add(p.end)
    return sorted(times)


def _max_factor(spec: ArrivalProcessSpec, flow: int) -> float:
    factor = 1.0
    for boundary in [0.0] + _perturbation_boundaries(spec, flow):
        factor = max(factor, spec.rate_factor(flow, boundary))
    return factor


class PoissonArrivals:
    """Unit arrivals at Poisson epochs, thinned to follow rate perturbations"""

    def __init__(self, flow: int, spec: ArrivalProcessSpec, rng: np.random.Generator):
        self.flow = flow
        self.spec = spec
        self.rng = rng
        self.mean_rate = spec.mean_rates[flow - 1]
        self._perturbed = any(p.flow == flow for p in spec.perturbations)
        self._rate_bound = self.mean_rate * _max_factor(spec, flow)
        self._clock = 0.0
        self._next: Optional[float] = None

    def peek(self) -> float:
        """Time of the next arrival (inf for a silent flow)"""
        if self._next is None:
            self._next = self._draw()
        return self._next

    def pop(self) -> float:
        t = self.peek()
        self._next = None
        return t

    def _draw(self) -> float:
        if self._rate_bound <= 0:
            return math.inf
        while True:
            self._clock += self.rng.exponential(1.0 / self._rate_bound)
            if not self._perturbed:
                return self._clock
            accept = self.mean_rate * self.spec.rate_factor(self.flow, self._clock) / self._rate_bound
            if self.rng.random() < accept:
                return self._clock


class FluidRateProcess:
    """Piecewise-constant arrival rate with exponential segment durations"""

    def __init__(self, flow: int, spec: ArrivalProcessSpec, rng: np.random.Generator):
        self.flow = flow
        self.spec = spec
        self.rng = rng
        self.mean_rate = spec.mean_rates[flow - 1]
        self._boundaries = _perturbation_boundaries(spec, flow)
        self._segment_start = 0.0
        self._segment_end, self._segment_rate = self._draw_segment(0.0)
        self._pending_segment: Optional[Tuple[float, float]] = None
        self.rate = self._segment_rate * spec.rate_factor(flow, 0.0)

    def _draw_segment(self, start: float) -> Tuple[float, float]:
        spec = self.spec
        duration = self.rng.exponential(spec.segment_mean)
        u_off = self.rng.random()
        u_rate = self.rng.random()
        if u_off < spec.off_probability:
            base = 0.0
        else:
            low = self.mean_rate * (1.0 - spec.rate_spread)
            high = self.mean_rate * (1.0 + spec.rate_spread)
            base = (low + (high - low) * u_rate) / (1.0 - spec.off_probability)
        return start + duration, base

    def next_change(self) -> float:
        """Time of the next rate discontinuity (segment end or perturbation boundary)"""
        i = bisect_right(self._boundaries, self._segment_start)
        boundary = self._boundaries[i] if i < len(self._boundaries) else math.inf
        return min(self._segment_end, boundary)

    def peek(self) -> Tuple[float, float]:
        """(time, rate after) of the next discontinuity"""
        t = self.next_change()
        if t >= self._segment_end:
            if self._pending_segment is None:
                self._pending_segment = self._draw_segment(self._segment_end)
            base = self._pending_segment[1]
        else:
            base = self._segment_rate
        return t, base * self.spec.rate_factor(self.flow, t)

    def pop(self) -> Tuple[float, float]:
        t, new_rate = self.peek()
        if t >= self._segment_end:
            self._segment_end, self._segment_rate = self._pending_segment
            self._pending_segment = None
        self._segment_start = t
        self.rate = new_rate
        return t, new_rate


def classify_rate_change(old: float, new: float) -> EventKind:
    if old > 0 and new <= 0:
        return EventKind.ALPHA_DOWN_ZERO
    if old <= 0 and new > 0:
        return EventKind.ALPHA_UP_ZERO
    return EventKind.RATE_CHANGE


class ExogenousInputs:
    """The four exogenous flows of one sample path"""

    def __init__(self, spec: ArrivalProcessSpec):
        self.spec = spec
        self.mode = spec.mode
        rngs = flow_generators(spec.seed)
        if self.mode == SimulationMode.FLUID:
            self._fluid = [FluidRateProcess(n, spec, rngs[n - 1]) for n in range(1, NUM_FLOWS + 1)]
            self._poisson: List[PoissonArrivals] = []
        else:
            self._fluid = []
            self._poisson = [PoissonArrivals(n, spec, rngs[n - 1]) for n in range(1, NUM_FLOWS + 1)]
        self.history: List[List[float]] = [[] for _ in range(NUM_FLOWS)]

    def rates(self) -> Tuple[float, float, float, float]:
        """Exact current rates (fluid); zeros in discrete mode"""
        if self._fluid:
            return tuple(p.rate for p in self._fluid)
        return (0.0,) * NUM_FLOWS

    def upcoming(self) -> List[ScheduledEvent]:
        """Earliest exogenous event of each flow"""
        events = []
        if self._fluid:
            for process in self._fluid:
                t, new_rate = process.peek()
                if math.isfinite(t):
                    events.append(ScheduledEvent(t, classify_rate_change(process.rate, new_rate), process.flow))
        else:
            for process in self._poisson:
                t = process.peek()
                if math.isfinite(t):
                    events.append(ScheduledEvent(t, EventKind.ARRIVAL, process.flow))
        return events

    def consume(self, event: ScheduledEvent) -> None:
        """Advance the stream that produced the event"""
        if self._fluid:
            self._fluid[event.flow - 1].pop()
        else:
            t = self._poisson[event.flow - 1].pop()
            self.history[event.flow - 1].append(t)

    def windowed_rates(self, t: float, window: float) -> Tuple[float, float, float, float]:
        return tuple(estimate_arrival_rate(h, t, window) for h in self.history)


def estimate_arrival_rate(arrivals: Sequence[float], tau_k: float, t_w: float) -> float:
    """Windowed arrival-rate estimate N_a / min(t_w, tau_k)

    Args:
        arrivals: Sorted arrival times of one flow
        tau_k: Event time (s)
        t_w: Window length (s)

    Returns:
        Arrivals in [tau_k - t_w, tau_k) divided by the window actually observed
    """
    span = min(t_w, tau_k)
    if span <= 0:
        return 0.0
    lo = bisect_left(arrivals, tau_k - t_w)
    hi = bisect_left(arrivals, tau_k)
    return (hi - lo) / span
