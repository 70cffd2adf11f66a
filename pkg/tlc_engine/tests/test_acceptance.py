"""
Full-size behaviour checks: optimisation gains, load ordering, online
adaptivity, smoothing, the no-light baseline and path invariants.

Every test here is slow and only runs with --runslow.
"""

import numpy as np
import pandas as pd
import pytest

from ..core.config import Config, load_config_document
from ..core.controller import GREEN_ROAD_1, GREEN_ROAD_2
from ..core.dynamics import classify_region, queue_level, region_from_levels
from ..core.engine import run_experiment
from ..core.models import (
    DEFAULT_PARAMETERS,
    ArrivalProcessSpec,
    EventKind,
    ParameterVector,
    QueueLevel,
    Region,
    SimulationMode,
)
from ..services.simulator import run_sample_path

MASTER_SEEDS = [1, 2, 3, 4, 5]
PEAK = [0.154, 0.175, 0.014, 0.014]
SETTINGS = Config(environment="test", log_json=False, workers=4)


def _run(tmp_path, name, **values):
    data = {"output_dir": str(tmp_path / name)}
    data.update(values)
    return run_experiment(load_config_document(data), SETTINGS)


def _window_costs(result) -> np.ndarray:
    frame = pd.read_csv(result.output_dir / "online.csv")
    return frame["cost"].to_numpy()


@pytest.mark.slow
class TestOptimizationGain:
    """Batch descent at two loads, median over master seeds"""

    @pytest.mark.parametrize("interarrival, required", [
        ([5, 5, 20, 20], 20.0),
        ([5, 8, 20, 20], 35.0),
    ])
    def test_median_reduction(self, tmp_path, interarrival, required):
        reductions = []
        for seed in MASTER_SEEDS:
            result = _run(
                tmp_path, f"opt-{seed}",
                scenario="optimize", interarrival=interarrival, seed=seed,
                optimizer={"iterations": 20, "replications": 20, "path_length": 1000.0},
            )
            reductions.append(result.summary["reduction_percent"])
        assert float(np.median(reductions)) >= required


@pytest.mark.slow
class TestLoadOrdering:
    """Heavier load costs more at the initial parameters"""

    def test_heavier_load_costs_more(self, tmp_path):
        wins = 0
        for seed in MASTER_SEEDS:
            heavy = _run(tmp_path, f"heavy-{seed}", scenario="simulate", interarrival=[5, 5, 20, 20],
                         seed=seed, horizon=1000.0, replications=20)
            light = _run(tmp_path, f"light-{seed}", scenario="simulate", interarrival=[8, 8, 20, 20],
                         seed=seed, horizon=1000.0, replications=20)
            wins += heavy.summary["mean_cost"] > light.summary["mean_cost"]
        assert wins >= 4


@pytest.mark.slow
class TestOnlineAdaptation:
    """Long online runs at the peak rates"""

    def test_recovers_after_rate_increase(self, tmp_path):
        recovered = 0
        for seed in MASTER_SEEDS:
            result = _run(
                tmp_path, f"adapt-{seed}",
                scenario="online", arrival_rates=PEAK, seed=seed,
                perturbations=[{"flow": 1, "factor": 1.3, "start": 21600.0, "end": 36000.0}],
            )
            costs = _window_costs(result)
            assert len(costs) == 36
            # windows 13..17 precede the change at 21600 s
            before = costs[13:18].mean()
            after = costs[-5:].mean()
            recovered += abs(after - before) <= 0.15 * before
        assert recovered >= 4

    def test_smoothing_lowers_plateau_variance(self, tmp_path):
        calmer = 0
        for seed in range(1, 11):
            smoothed = _run(tmp_path, f"smooth-{seed}", scenario="online", arrival_rates=PEAK, seed=seed,
                            optimizer={"smoothing_weights": [0.6, 0.4]})
            raw = _run(tmp_path, f"raw-{seed}", scenario="online", arrival_rates=PEAK, seed=seed,
                       optimizer={"smoothing_weights": [1.0, 0.0]})
            calmer += _window_costs(smoothed)[-10:].var() <= _window_costs(raw)[-10:].var()
        assert calmer >= 7


@pytest.mark.slow
class TestBaselineComparison:
    """Uncontrolled intersection against initial and optimised control"""

    def test_control_pays_off_under_heavy_load(self, tmp_path):
        heavy_wins, light_wins = 0, 0
        for seed in MASTER_SEEDS:
            result = _run(
                tmp_path, f"baseline-{seed}",
                scenario="compare-baseline", preset="veberod", seed=seed,
                baseline={"scaling_factors": [1.0, 1.5, 2.0]},
            )
            frame = pd.read_csv(result.output_dir / "compare_baseline.csv").set_index("scaling")
            heavy_wins += all(
                frame.loc[f, "tlc_optimized_cost"] < frame.loc[f, "baseline_cost"] for f in (1.5, 2.0)
            )
            light_wins += frame.loc[1.0, "baseline_cost"] < frame.loc[1.0, "tlc_initial_cost"]
        assert heavy_wins >= 4
        assert light_wins >= 4


def _check_quasi_dynamic_path(trace, params: ParameterVector) -> None:
    records = trace.records
    discrete = trace.mode is SimulationMode.DISCRETE
    phase_start = {1: trace.t0, 2: None}
    for a, b in zip(records, records[1:]):
        assert b.tau >= a.tau
        dt = b.tau - a.tau
        for i in range(4):
            delta = b.x[i] - a.x[i]
            if discrete:
                if b.kind is EventKind.ARRIVAL and b.flow == i + 1:
                    assert delta in (0.0, 1.0)
                elif b.kind is EventKind.DEPARTURE and b.flow == i + 1:
                    assert delta == -1.0
                else:
                    assert delta == 0.0
            else:
                if a.u[i] == 0:
                    slope = a.alpha[i]
                elif a.levels[i] is QueueLevel.EMPTY:
                    slope = 0.0
                else:
                    slope = a.alpha[i] - a.h
                expected = max(a.x[i] + slope * dt, 0.0)
                assert abs(b.x[i] - expected) <= 1e-9 * max(1.0, abs(expected))
        for k in range(2):
            # a RED crossing only gains pedestrians and waiting time
            if a.u[k + 2] == 0 and b.u[k + 2] == 0:
                assert b.p[k] >= a.p[k]
    for r in records:
        assert r.u in (GREEN_ROAD_1, GREEN_ROAD_2)
        assert r.z[0] * r.z[1] == 0.0
        assert r.w[0] * r.w[1] == 0.0
        assert min(r.x) >= 0.0
        if discrete:
            assert all(float(v).is_integer() for v in r.x)
        if r.kind is EventKind.G2R:
            road = r.flow
            if r.region in (Region.X3, Region.X6) and phase_start[road] is not None:
                assert r.tau - phase_start[road] >= params.theta_min(road) - 1e-9
            phase_start[road], phase_start[3 - road] = None, r.tau


@pytest.mark.slow
class TestPathInvariants:
    """Structural invariants over many randomized paths"""

    @pytest.mark.parametrize("mode", [SimulationMode.DISCRETE, SimulationMode.FLUID])
    def test_hundred_paths(self, mode):
        params = ParameterVector.from_array(DEFAULT_PARAMETERS)
        base = ArrivalProcessSpec.from_interarrival([6, 6, 10, 20], mode=mode, seed=0)
        for seed in range(100):
            trace = run_sample_path(base.with_seed(seed), params, 1000.0)
            _check_quasi_dynamic_path(trace, params)

    def test_region_totality(self):
        rng = np.random.default_rng(2024)
        n = 1_000_000
        s = rng.uniform(0.1, 20.0, size=(n, 2))
        x = rng.uniform(0.0, 40.0, size=(n, 2))
        # land some points exactly on zero and on the threshold
        pick = rng.integers(0, 3, size=(n, 2))
        x = np.where(pick == 0, 0.0, np.where(pick == 1, s, x))
        regions = set(Region)
        for (x1, x2), (s1, s2) in zip(x.tolist(), s.tolist()):
            region = classify_region(x1, x2, s1, s2)
            assert region in regions
            assert region is region_from_levels(queue_level(x1, s1), queue_level(x2, s2))
