"""
Finite-difference gradient oracle for TLC Engine
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import config
from ..core.exceptions import InfeasibleDeltaError
from ..core.models import (
    NUM_PARAMETERS,
    PARAMETER_NAMES,
    ArrivalProcessSpec,
    GradientComparison,
    ParameterVector,
    SimulationMode,
)
from .replications import PathJob, evaluate_paths
from .simulator import DEFAULT_DEPARTURE_RATE

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.05
COSINE_THRESHOLD = 0.95
RELATIVE_ERROR_THRESHOLD = 0.1
FD_FLOOR = 1e-3


def effective_delta(params: ParameterVector, index: int, delta: float) -> float:
    """Largest step <= delta keeping both params +/- step feasible

    Args:
        params: Base point
        index: 0-based parameter position
        delta: Requested step

    Raises:
        InfeasibleDeltaError: No positive step is feasible
    """
    v = params.as_tuple()
    step = float(delta)
    if index in (0, 2):
        step = min(step, v[index], v[index + 1] - v[index])
    elif index in (1, 3):
        step = min(step, v[index] - v[index - 1])
    else:
        step = min(step, 0.5 * v[index])
    if not step > 0:
        raise InfeasibleDeltaError(
            f"No feasible finite-difference step for {PARAMETER_NAMES[index]}", index=index + 1
        )
    return step


def finite_difference_gradient(
    spec: ArrivalProcessSpec,
    params: ParameterVector,
    T: float,
    delta: Optional[Sequence[float]] = None,
    h: float = DEFAULT_DEPARTURE_RATE,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
    workers: Optional[int] = None,
) -> Tuple[List[float], List[bool], List[float]]:
    """Central differences of L with common random numbers

    Both perturbed paths reuse the arrival-process seed, so they differ only through
    the parameters.

    Returns:
        (fd gradient, stability flags, effective steps)
    """
    deltas = [DEFAULT_DELTA] * NUM_PARAMETERS if delta is None else list(delta)
    base = params.as_array()
    steps = [effective_delta(params, i, deltas[i]) for i in range(NUM_PARAMETERS)]
    weights = tuple(float(w) for w in weights)

    jobs = [PathJob(spec, tuple(base), T, weights=weights, h=h)]
    for i, step in enumerate(steps):
        for sign in (1.0, -1.0):
            shifted = base.copy()
            shifted[i] += sign * step
            jobs.append(PathJob(spec, tuple(float(v) for v in shifted), T, weights=weights, h=h))

    results = evaluate_paths(jobs, workers)
    signature = results[0].signature
    fd, stable = [], []
    for i, step in enumerate(steps):
        plus, minus = results[1 + 2 * i], results[2 + 2 * i]
        fd.append((plus.cost - minus.cost) / (2.0 * step))
        stable.append(plus.signature == signature and minus.signature == signature)
    return fd, stable, steps


def compare_gradients(
    ipa: Sequence[float],
    fd: Sequence[float],
    stable: Optional[Sequence[bool]] = None,
    effective: Optional[Sequence[float]] = None,
    chattering: bool = False,
    switches_per_100s: Optional[float] = None,
) -> GradientComparison:
    """Relative errors and cosine similarity over the stable coordinates

    A comparison only passes when at least one stable coordinate has
    |fd| > FD_FLOOR and the base path was not chattering.
    """
    stable = [True] * len(ipa) if stable is None else list(stable)
    relative: List[Optional[float]] = []
    for a, b, ok in zip(ipa, fd, stable):
        if ok and abs(b) > FD_FLOOR:
            relative.append(abs(a - b) / abs(b))
        else:
            relative.append(None)

    mask = np.array(stable, dtype=bool)
    cosine = None
    if mask.any():
        a = np.asarray(ipa, dtype=float)[mask]
        b = np.asarray(fd, dtype=float)[mask]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na > 0 and nb > 0:
            cosine = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
        elif na > 0 or nb > 0:
            cosine = 0.0

    compared = [r for r in relative if r is not None]
    max_error = max(compared) if compared else None
    if chattering:
        verdict = "chattering"
    elif not compared:
        verdict = "vacuous"
    elif cosine is not None and cosine >= COSINE_THRESHOLD and max_error <= RELATIVE_ERROR_THRESHOLD:
        verdict = "agree"
    else:
        verdict = "mismatch"
    return GradientComparison(
        ipa=[float(v) for v in ipa],
        fd=[float(v) for v in fd],
        relative_error=relative,
        stable=stable,
        effective_delta=[float(v) for v in (effective or [])],
        cosine_similarity=cosine,
        max_relative_error=max_error,
        compared=len(compared),
        chattering=chattering,
        switches_per_100s=switches_per_100s,
        verdict=verdict,
        passed=verdict == "agree",
    )


def validate_gradient(
    spec: ArrivalProcessSpec,
    params: ParameterVector,
    T: float,
    delta: Optional[Sequence[float]] = None,
    h: float = DEFAULT_DEPARTURE_RATE,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
    workers: Optional[int] = None,
    literal_cost_indexing: bool = False,
    switch_wait_derivative: bool = False,
    chattering_threshold: Optional[float] = None,
) -> GradientComparison:
    """IPA gradient of one fluid path checked against the oracle

    The base path counts as chattering when its switch rate exceeds the
    threshold or any switch was suppressed at a crowded instant; such a
    comparison never passes.
    """
    if spec.mode is not SimulationMode.FLUID:
        logger.warning("Gradient oracle runs on the fluid model; switching mode to fluid")
        spec = spec.model_copy(update={"mode": SimulationMode.FLUID})
    threshold = config.chattering_threshold if chattering_threshold is None else chattering_threshold

    job = PathJob(
        spec, params.as_tuple(), T, weights=tuple(weights), h=h, with_gradient=True,
        literal_cost_indexing=literal_cost_indexing, switch_wait_derivative=switch_wait_derivative,
    )
    base = evaluate_paths([job], workers=1)[0]
    chattering = base.switches_per_100s > threshold or base.chattering > 0
    if chattering:
        logger.warning(
            f"Base path chatters ({base.switches_per_100s:.1f} switches per 100 s, "
            f"{base.chattering} suppressed); the gradient check cannot pass"
        )
    fd, stable, steps = finite_difference_gradient(spec, params, T, delta, h, weights, workers)
    comparison = compare_gradients(
        base.gradient.grad, fd, stable, steps,
        chattering=chattering, switches_per_100s=base.switches_per_100s,
    )
    logger.info(
        f"Gradient check seed={spec.seed}: {comparison.verdict}, cosine={comparison.cosine_similarity}, "
        f"max relative error={comparison.max_relative_error}, "
        f"compared {comparison.compared}, stable {sum(stable)}/{NUM_PARAMETERS}"
    )
    if not all(math.isfinite(v) for v in comparison.ipa):
        logger.warning("Non-finite IPA gradient entries")
    return comparison
