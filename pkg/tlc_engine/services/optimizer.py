"""
Gradient-based parameter adaptation for TLC Engine
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from ..core.config import OptimizerSettings
from ..core.exceptions import OptimizationError, TLCEngineError
from ..core.models import (
    NUM_PARAMETERS,
    ArrivalProcessSpec,
    IterationRecord,
    OptimizationTrajectory,
    ParameterVector,
)
from .ipa import ipa_gradient
from .replications import PathJob, evaluate_paths
from .simulator import DEFAULT_CONFLICT_HEADWAY, DEFAULT_DEPARTURE_RATE, IntersectionSimulator

logger = logging.getLogger(__name__)


def project(raw: Sequence[float], lower_bound: float = 0.1) -> ParameterVector:
    """Clamp a raw step result back onto the feasible set

    theta_min >= 0 first, then theta_max >= theta_min, then every other
    entry >= lower_bound.
    """
    v = [float(x) for x in raw]
    if len(v) != NUM_PARAMETERS:
        raise ValueError(f"Expected {NUM_PARAMETERS} parameters, got {len(v)}")
    for lo, hi in ((0, 1), (2, 3)):
        v[lo] = max(v[lo], 0.0)
        v[hi] = max(v[hi], v[lo])
    for i in range(4, NUM_PARAMETERS):
        v[i] = max(v[i], lower_bound)
    return ParameterVector.from_array(v)


def smooth_gradient(current: Sequence[float], previous: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    return weights[0] * np.asarray(current, dtype=float) + weights[1] * np.asarray(previous, dtype=float)


def step_size(rho0: float, gradient: Sequence[float], iteration: int = 0, decay: bool = False) -> float:
    """rho_0 / max(1, |g|_inf), optionally divided by ceil(l / 10)"""
    base = rho0 / max(1, math.ceil(iteration / 10)) if decay else rho0
    norm = float(np.max(np.abs(gradient))) if len(gradient) else 0.0
    return base / max(1.0, norm)


def replication_seed(master: int, iteration: int, replication: int) -> int:
    """Seed of replication r at iteration l, derived from the master seed"""
    state = np.random.SeedSequence([int(master), int(iteration), int(replication)]).generate_state(1, np.uint64)
    return int(state[0])


def batch_optimize(
    settings: OptimizerSettings,
    spec: ArrivalProcessSpec,
    initial: ParameterVector,
    h: float = DEFAULT_DEPARTURE_RATE,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
    rate_window: Optional[float] = None,
    workers: Optional[int] = None,
    literal_cost_indexing: bool = False,
    switch_wait_derivative: bool = False,
) -> OptimizationTrajectory:
    """Gradient descent on replication-averaged IPA gradients

    Iterations l = 0..N each evaluate the cost at the current parameters;
    the first N also take a projected step, the last only records the
    final cost.

    Raises:
        OptimizationError: A path or gradient evaluation failed
    """
    trajectory = OptimizationTrajectory(kind="batch")
    params = initial
    weights = tuple(float(w) for w in weights)

    for iteration in range(settings.iterations + 1):
        jobs = [
            PathJob(
                spec.with_seed(replication_seed(spec.seed, iteration, r)),
                params.as_tuple(),
                settings.path_length,
                weights=weights,
                h=h,
                with_gradient=True,
                rate_window=rate_window,
                literal_cost_indexing=literal_cost_indexing,
                switch_wait_derivative=switch_wait_derivative,
            )
            for r in range(settings.replications)
        ]
        try:
            results = evaluate_paths(jobs, workers)
        except TLCEngineError as e:
            raise OptimizationError(f"Iteration {iteration} failed: {e.message}", iteration=iteration) from e
        except (ArithmeticError, ValueError) as e:
            raise OptimizationError(f"Iteration {iteration} failed: {e}", iteration=iteration) from e

        cost = float(np.mean([r.cost for r in results]))
        gradient = np.mean([r.gradient.grad for r in results], axis=0)
        degenerate = sum(r.gradient.degenerate_count for r in results)
        final = iteration == settings.iterations
        rho = 0.0 if final else step_size(settings.step_size, gradient, iteration, settings.step_decay)

        trajectory.records.append(IterationRecord(
            iteration=iteration,
            parameters=list(params.as_tuple()),
            cost=cost,
            gradient=[float(g) for g in gradient],
            grad_norm=float(np.max(np.abs(gradient))),
            step_size=rho,
            degenerate_count=degenerate,
        ))
        logger.info(f"Batch iteration {iteration}: J={cost:.4f} |g|={np.max(np.abs(gradient)):.4g} rho={rho:.4g}")

        if not final:
            params = project(params.as_array() - rho * gradient, settings.lower_bound)

    return trajectory


def online_optimize(
    settings: OptimizerSettings,
    spec: ArrivalProcessSpec,
    initial: ParameterVector,
    h: float = DEFAULT_DEPARTURE_RATE,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
    rate_window: Optional[float] = None,
    conflict_headway: float = DEFAULT_CONFLICT_HEADWAY,
    literal_cost_indexing: bool = False,
    switch_wait_derivative: bool = False,
) -> OptimizationTrajectory:
    """Adapt parameters window by window along one continuous sample path

    Raises:
        ValueError: The horizon is not a whole number of windows
        OptimizationError: A window failed to simulate or differentiate
    """
    window = settings.window_length
    count = settings.total_horizon / window
    if abs(count - round(count)) > 1e-9 or round(count) < 1:
        raise ValueError(
            f"total_horizon {settings.total_horizon} is not a multiple of window_length {window}"
        )
    count = int(round(count))

    simulator = IntersectionSimulator(
        spec, initial, h=h, weights=weights, conflict_headway=conflict_headway
    )
    trajectory = OptimizationTrajectory(kind="online")
    params = initial
    previous_gradient = np.zeros(NUM_PARAMETERS)
    previous_cost: Optional[float] = None
    smoothing = settings.smoothing_weights

    for index in range(count):
        t_start, t_end = index * window, (index + 1) * window
        try:
            trace = simulator.run_until(t_end, params)
            report = ipa_gradient(
                trace, weights, t_w=rate_window,
                literal_cost_indexing=literal_cost_indexing,
                switch_wait_derivative=switch_wait_derivative,
            )
        except TLCEngineError as e:
            raise OptimizationError(f"Window {index} failed: {e.message}", iteration=index) from e

        raw = np.asarray(report.grad, dtype=float)
        if settings.smoothing_target == "gradient":
            gradient = smooth_gradient(raw, previous_gradient, smoothing)
            cost = report.cost
        else:
            gradient = raw
            prior = report.cost if previous_cost is None else previous_cost
            cost = smoothing[0] * report.cost + smoothing[1] * prior
        rho = step_size(settings.step_size, gradient, index, settings.step_decay)

        trajectory.records.append(IterationRecord(
            iteration=index,
            parameters=list(params.as_tuple()),
            cost=float(cost),
            gradient=[float(g) for g in gradient],
            raw_gradient=[float(g) for g in raw],
            grad_norm=float(np.max(np.abs(gradient))),
            step_size=rho,
            t_start=t_start,
            t_end=t_end,
            degenerate_count=report.degenerate_count,
        ))
        logger.info(f"Window {index} [{t_start:.0f}, {t_end:.0f}): L={report.cost:.4f} rho={rho:.4g}")

        previous_gradient = raw
        previous_cost = report.cost
        params = project(params.as_array() - rho * gradient, settings.lower_bound)

    return trajectory


def parameter_drift(trajectory: OptimizationTrajectory, start: int, end: int) -> float:
    """|v_end - v_start|_inf between two recorded iterations"""
    records: List[IterationRecord] = trajectory.records
    a = np.asarray(records[start].parameters)
    b = np.asarray(records[end].parameters)
    return float(np.max(np.abs(b - a)))
