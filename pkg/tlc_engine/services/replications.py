"""
Independent sample-path evaluations, optionally spread over worker processes
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from ..core.config import config
from ..core.models import ArrivalProcessSpec, GradientReport, ParameterVector, Policy
from .ipa import ipa_gradient
from .simulator import DEFAULT_CONFLICT_HEADWAY, DEFAULT_DEPARTURE_RATE, mean_wait_of_trace, run_sample_path


@dataclass(frozen=True)
class PathJob:
    """Everything a worker needs to simulate one path"""
    spec: ArrivalProcessSpec
    parameters: Tuple[float, ...]
    horizon: float
    policy: Policy = Policy.QUASI_DYNAMIC
    weights: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    h: float = DEFAULT_DEPARTURE_RATE
    conflict_headway: float = DEFAULT_CONFLICT_HEADWAY
    with_gradient: bool = False
    rate_window: Optional[float] = None
    literal_cost_indexing: bool = False
    switch_wait_derivative: bool = False


@dataclass(frozen=True)
class PathResult:
    cost: float
    signature: Tuple[Tuple[str, int], ...]
    switches: int
    chattering: int
    switches_per_100s: float
    gradient: Optional[GradientReport] = None
    mean_wait: float = 0.0


def evaluate_path(job: PathJob) -> PathResult:
    """Simulate one path and optionally estimate its IPA gradient"""
    params = ParameterVector.from_array(job.parameters)
    trace = run_sample_path(
        job.spec, params, job.horizon, policy=job.policy, weights=job.weights,
        h=job.h, conflict_headway=job.conflict_headway,
    )
    report = None
    if job.with_gradient:
        report = ipa_gradient(
            trace,
            job.weights,
            t_w=job.rate_window,
            literal_cost_indexing=job.literal_cost_indexing,
            switch_wait_derivative=job.switch_wait_derivative,
        )
    return PathResult(
        cost=trace.cost,
        signature=trace.kind_signature(),
        switches=trace.diagnostics.switches,
        chattering=trace.diagnostics.chattering,
        switches_per_100s=trace.switches_per_100s(),
        gradient=report,
        mean_wait=mean_wait_of_trace(trace),
    )


def evaluate_paths(jobs: Sequence[PathJob], workers: Optional[int] = None) -> List[PathResult]:
    """Evaluate jobs and return results in job order"""
    workers = config.workers if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [evaluate_path(job) for job in jobs]

    results = {}
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(evaluate_path, job): idx for idx, job in enumerate(jobs)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [results[idx] for idx in range(len(jobs))]
