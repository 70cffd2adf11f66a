"""
Experiment engine: runs configured scenarios and writes their artifacts
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..core.config import Config, ExperimentConfig, config, dump_resolved_config
from ..core.exceptions import ScenarioError, TLCEngineError
from ..core.models import (
    PARAMETER_NAMES,
    ArrivalProcessSpec,
    ParameterVector,
    Policy,
    ScenarioName,
    SimulationMode,
)
from ..services.optimizer import batch_optimize, online_optimize, replication_seed
from ..services.oracle import validate_gradient
from ..services.replications import PathJob, evaluate_paths
from ..services.simulator import run_sample_path
from ..utils.export import (
    online_frame,
    rows_frame,
    trajectory_frame,
    write_csv,
    write_json,
    write_trace_csv,
)
from ..utils.monitoring import ChatteringMonitor, MetricsCollector, PerformanceTimer

logger = logging.getLogger(__name__)

SIMULATE_COLUMNS = ["replication", "seed", "cost", "switches", "switches_per_100s", "suppressed", "mean_wait"]
SWEEP_COLUMNS = [
    "inv_alpha_1", "inv_alpha_2", "inv_alpha_3", "inv_alpha_4",
    "J_init", "J_opt", *[f"opt_{name}" for name in PARAMETER_NAMES], "reduction_percent",
]
BASELINE_COLUMNS = [
    "scaling", "baseline_cost", "tlc_initial_cost", "tlc_optimized_cost", "optimized_vs_baseline_percent",
]


@dataclass
class ScenarioResult:
    """Outcome of one scenario run"""
    scenario: ScenarioName
    output_dir: Path
    summary: Dict[str, Any]
    artifacts: List[Path] = field(default_factory=list)


class ExperimentEngine:
    """Runs one ExperimentConfig end to end"""

    def __init__(
        self,
        experiment: ExperimentConfig,
        settings: Optional[Config] = None,
        metrics_collector: Optional[MetricsCollector] = None,
    ):
        """Initialize the engine

        Args:
            experiment: Validated experiment configuration
            settings: Runtime settings (defaults to the global config)
            metrics_collector: Optional collector for durations and costs
        """
        self.experiment = experiment
        self.settings = settings or config
        self.metrics = metrics_collector or MetricsCollector()
        self.chattering = ChatteringMonitor(self.settings.chattering_threshold)
        self._handlers: Dict[ScenarioName, Callable[[Path], ScenarioResult]] = {
            ScenarioName.SIMULATE: self._simulate,
            ScenarioName.OPTIMIZE: self._optimize,
            ScenarioName.ONLINE: self._online,
            ScenarioName.VALIDATE_GRADIENT: self._validate_gradient,
            ScenarioName.SWEEP: self._sweep,
            ScenarioName.COMPARE_BASELINE: self._compare_baseline,
        }

    # -- helpers --------------------------------------------------------

    @property
    def initial_parameters(self) -> ParameterVector:
        return ParameterVector.from_array(self.experiment.initial_parameters)

    @property
    def weights(self) -> tuple:
        return tuple(self.experiment.weights)

    def arrival_spec(
        self,
        rates: Optional[Sequence[float]] = None,
        seed: Optional[int] = None,
        mode: Optional[SimulationMode] = None,
    ) -> ArrivalProcessSpec:
        """Arrival processes for the configured mode and rates"""
        exp = self.experiment
        return ArrivalProcessSpec(
            mode=mode or exp.mode,
            mean_rates=tuple(rates if rates is not None else exp.arrival_rates),
            seed=exp.seed if seed is None else seed,
            segment_mean=exp.fluid.segment_mean,
            rate_spread=exp.fluid.rate_spread,
            off_probability=exp.fluid.off_probability,
            perturbations=tuple(exp.perturbations),
            rate_window=exp.resolved_rate_window,
            approach_time=exp.approach_time,
        )

    def _path_jobs(self, spec: ArrivalProcessSpec, params: ParameterVector, horizon: float,
                   policy: Policy = Policy.QUASI_DYNAMIC) -> List[PathJob]:
        exp = self.experiment
        return [
            PathJob(
                spec.with_seed(replication_seed(spec.seed, 0, r)),
                params.as_tuple(),
                horizon,
                policy=policy,
                weights=self.weights,
                h=exp.departure_rate,
                conflict_headway=exp.baseline.conflict_headway,
            )
            for r in range(exp.replications)
        ]

    def _mean_cost(self, spec: ArrivalProcessSpec, params: ParameterVector, horizon: float,
                   policy: Policy = Policy.QUASI_DYNAMIC, label: str = "") -> float:
        results = evaluate_paths(self._path_jobs(spec, params, horizon, policy), self.settings.workers)
        for r, result in enumerate(results):
            self.chattering.record_path(f"{label}#{r}", result.switches_per_100s, result.chattering)
            self._record_path_metrics(result, label)
        return float(np.mean([result.cost for result in results]))

    def _record_path_metrics(self, result, label: str) -> None:
        tags = {"scenario": self.experiment.scenario.value, "label": label}
        self.metrics.record_metric("path_cost", result.cost, tags)
        self.metrics.record_metric("path_switches_per_100s", result.switches_per_100s, tags)
        self.metrics.record_metric("path_mean_wait", result.mean_wait, tags)

    def _batch(self, spec: ArrivalProcessSpec):
        exp = self.experiment
        return batch_optimize(
            exp.optimizer,
            spec,
            self.initial_parameters,
            h=exp.departure_rate,
            weights=self.weights,
            rate_window=exp.resolved_rate_window,
            workers=self.settings.workers,
            literal_cost_indexing=exp.gradient.literal_cost_indexing,
            switch_wait_derivative=exp.gradient.switch_wait_derivative,
        )

    # -- entry point ----------------------------------------------------

    def run_scenario(self) -> ScenarioResult:
        """Run the configured scenario and write its artifacts

        Returns:
            ScenarioResult with the summary written to summary.json

        Raises:
            ScenarioError: Unknown scenario
            TLCEngineError: Any simulation, estimation or optimisation failure
        """
        exp = self.experiment
        scenario = exp.scenario
        handler = self._handlers.get(scenario)
        if handler is None:
            raise ScenarioError(f"Unsupported scenario: {scenario}", scenario=str(scenario))

        out = Path(exp.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        resolved = out / "resolved_config.yaml"
        resolved.write_text(dump_resolved_config(exp), encoding="utf-8")

        logger.info(f"Starting scenario {scenario.value} (mode={exp.mode.value}, seed={exp.seed})")
        with PerformanceTimer(scenario.value, self.metrics):
            result = handler(out)

        result.summary.update({
            "scenario": scenario.value,
            "mode": exp.mode.value,
            "seed": exp.seed,
            "chattering": self.chattering.get_summary(),
        })
        result.artifacts.insert(0, resolved)
        result.artifacts.append(write_json(result.summary, out / "summary.json"))
        for name, stats in self.metrics.summaries().items():
            logger.info(
                f"Metric {name}: count={stats['count']} mean={stats['avg']:.6g} "
                f"min={stats['min']:.6g} max={stats['max']:.6g}"
            )
        logger.info(f"Scenario {scenario.value} finished; artifacts in {out}")
        return result

    # -- scenarios ------------------------------------------------------

    def _simulate(self, out: Path) -> ScenarioResult:
        exp = self.experiment
        spec = self.arrival_spec()
        params = self.initial_parameters
        jobs = self._path_jobs(spec, params, exp.horizon)

        first = jobs[0]
        trace = run_sample_path(
            first.spec, params, exp.horizon, weights=self.weights,
            h=exp.departure_rate, conflict_headway=exp.baseline.conflict_headway, settings=self.settings,
        )
        artifacts = [write_trace_csv(trace, out / "trace.csv")]

        results = evaluate_paths(jobs, self.settings.workers)
        rows = []
        for r, (job, result) in enumerate(zip(jobs, results)):
            self.chattering.record_path(f"simulate#{r}", result.switches_per_100s, result.chattering)
            self._record_path_metrics(result, "simulate")
            rows.append({
                "replication": r,
                "seed": str(job.spec.seed),
                "cost": result.cost,
                "switches": result.switches,
                "switches_per_100s": result.switches_per_100s,
                "suppressed": result.chattering,
                "mean_wait": result.mean_wait,
            })
        artifacts.append(write_csv(rows_frame(rows, SIMULATE_COLUMNS), out / "costs.csv"))

        costs = [row["cost"] for row in rows]
        summary = {
            "mean_cost": float(np.mean(costs)),
            "std_cost": float(np.std(costs)),
            "mean_wait": float(np.mean([row["mean_wait"] for row in rows])),
            "replications": len(costs),
            "events_first_path": len(trace.records),
        }
        return ScenarioResult(ScenarioName.SIMULATE, out, summary, artifacts)

    def _optimize(self, out: Path) -> ScenarioResult:
        trajectory = self._batch(self.arrival_spec())
        artifacts = [write_csv(trajectory_frame(trajectory), out / "trajectory.csv")]
        summary = {
            "initial_cost": trajectory.initial_cost,
            "final_cost": trajectory.final_cost,
            "reduction_percent": trajectory.reduction_percent,
            "final_parameters": trajectory.final_parameters,
            "iterations": self.experiment.optimizer.iterations,
        }
        return ScenarioResult(ScenarioName.OPTIMIZE, out, summary, artifacts)

    def _online(self, out: Path) -> ScenarioResult:
        exp = self.experiment
        try:
            trajectory = online_optimize(
                exp.optimizer,
                self.arrival_spec(),
                self.initial_parameters,
                h=exp.departure_rate,
                weights=self.weights,
                rate_window=exp.resolved_rate_window,
                conflict_headway=exp.baseline.conflict_headway,
                literal_cost_indexing=exp.gradient.literal_cost_indexing,
                switch_wait_derivative=exp.gradient.switch_wait_derivative,
            )
        except ValueError as e:
            raise ScenarioError(str(e), scenario=ScenarioName.ONLINE.value) from e
        artifacts = [write_csv(online_frame(trajectory), out / "online.csv")]
        costs = [record.cost for record in trajectory.records]
        summary = {
            "windows": len(costs),
            "first_window_cost": costs[0],
            "final_window_cost": costs[-1],
            "mean_cost_last_5": float(np.mean(costs[-5:])),
            "final_parameters": trajectory.final_parameters,
        }
        return ScenarioResult(ScenarioName.ONLINE, out, summary, artifacts)

    def _validate_gradient(self, out: Path) -> ScenarioResult:
        exp = self.experiment
        comparison = validate_gradient(
            self.arrival_spec(mode=SimulationMode.FLUID),
            self.initial_parameters,
            exp.gradient.horizon,
            delta=exp.gradient.delta,
            h=exp.departure_rate,
            weights=self.weights,
            workers=self.settings.workers,
            literal_cost_indexing=exp.gradient.literal_cost_indexing,
            switch_wait_derivative=exp.gradient.switch_wait_derivative,
            chattering_threshold=self.settings.chattering_threshold,
        )
        self.chattering.record_path("validate-gradient", comparison.switches_per_100s or 0.0)
        artifacts = [write_json(comparison, out / "gradient_comparison.json")]
        summary = {
            "cosine_similarity": comparison.cosine_similarity,
            "max_relative_error": comparison.max_relative_error,
            "stable_coordinates": sum(comparison.stable),
            "compared_coordinates": comparison.compared,
            "path_chattering": comparison.chattering,
            "verdict": comparison.verdict,
            "passed": comparison.passed,
        }
        if not comparison.passed:
            logger.warning(f"Gradient check did not pass: {comparison.verdict}")
        return ScenarioResult(ScenarioName.VALIDATE_GRADIENT, out, summary, artifacts)

    def _sweep(self, out: Path) -> ScenarioResult:
        rows = []
        for index, interarrival in enumerate(self.experiment.sweep):
            rates = [1.0 / t for t in interarrival]
            logger.info(f"Sweep row {index}: interarrival {interarrival}")
            trajectory = self._batch(self.arrival_spec(rates=rates))
            row = {f"inv_alpha_{n + 1}": t for n, t in enumerate(interarrival)}
            row.update({"J_init": trajectory.initial_cost, "J_opt": trajectory.final_cost})
            row.update({f"opt_{name}": v for name, v in zip(PARAMETER_NAMES, trajectory.final_parameters)})
            row["reduction_percent"] = trajectory.reduction_percent
            rows.append(row)
        artifacts = [write_csv(rows_frame(rows, SWEEP_COLUMNS), out / "sweep.csv")]
        reductions = [row["reduction_percent"] for row in rows]
        summary = {
            "rows": len(rows),
            "min_reduction_percent": min(reductions),
            "max_reduction_percent": max(reductions),
        }
        return ScenarioResult(ScenarioName.SWEEP, out, summary, artifacts)

    def _compare_baseline(self, out: Path) -> ScenarioResult:
        exp = self.experiment
        base_spec = self.arrival_spec()
        horizon = exp.optimizer.path_length
        rows = []
        for factor in exp.baseline.scaling_factors:
            spec = base_spec.scaled(factor)
            baseline = self._mean_cost(spec, self.initial_parameters, horizon, Policy.BASELINE, f"baseline x{factor}")
            initial = self._mean_cost(spec, self.initial_parameters, horizon, label=f"tlc x{factor}")
            trajectory = self._batch(spec)
            optimized_params = ParameterVector.from_array(trajectory.final_parameters)
            optimized = self._mean_cost(spec, optimized_params, horizon, label=f"tlc-opt x{factor}")
            gain = 100.0 * (baseline - optimized) / baseline if baseline > 0 else 0.0
            logger.info(
                f"Scaling {factor}: baseline={baseline:.3f} tlc={initial:.3f} optimized={optimized:.3f}"
            )
            rows.append({
                "scaling": factor,
                "baseline_cost": baseline,
                "tlc_initial_cost": initial,
                "tlc_optimized_cost": optimized,
                "optimized_vs_baseline_percent": gain,
            })
        artifacts = [write_csv(rows_frame(rows, BASELINE_COLUMNS), out / "compare_baseline.csv")]
        summary = {
            "scaling_factors": list(exp.baseline.scaling_factors),
            "optimized_beats_baseline": [row["scaling"] for row in rows
                                         if row["tlc_optimized_cost"] < row["baseline_cost"]],
        }
        return ScenarioResult(ScenarioName.COMPARE_BASELINE, out, summary, artifacts)


def run_experiment(experiment: ExperimentConfig, settings: Optional[Config] = None) -> ScenarioResult:
    """Convenience wrapper used by the CLI"""
    try:
        return ExperimentEngine(experiment, settings).run_scenario()
    except TLCEngineError:
        raise
    except (ArithmeticError, ValueError) as e:
        raise ScenarioError(f"Numerical failure: {e}", scenario=experiment.scenario.value) from e
