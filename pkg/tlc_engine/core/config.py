"""
Configuration management for TLC Engine
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError, ParameterConstraintError
from .models import (
    DEFAULT_PARAMETERS,
    NUM_FLOWS,
    NUM_PARAMETERS,
    RatePerturbation,
    ScenarioName,
    SimulationMode,
    check_parameter_constraints,
)


class Config(BaseSettings):
    """Runtime settings with validation"""

    model_config = SettingsConfigDict(
        env_prefix="TLC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Settings
    version: str = Field(default="1.0.0", description="Application version")
    debug: bool = Field(default=False, description="Log at DEBUG regardless of log_level")
    environment: str = Field(default="production", description="Environment")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_json: bool = Field(default=True, description="Render logs as JSON")
    sentry_dsn: Optional[str] = Field(default=None, description="Sentry DSN for error tracking")

    # Execution
    workers: int = Field(default=1, ge=1, description="Worker processes for independent replications")

    # Numerical guards
    max_events: int = Field(default=10_000_000, ge=1, description="Event budget per sample path")
    zero_tolerance: float = Field(default=1e-9, gt=0.0, description="Crossing slack per unit of threshold (fluid steps)")
    tie_tolerance: float = Field(default=1e-9, gt=0.0, description="Events closer than this are simultaneous (s)")
    degenerate_threshold: float = Field(default=1e-6, gt=0.0, description="Smallest IPA denominator accepted")
    max_switches_per_instant: int = Field(default=3, ge=1, description="Light switches allowed at one instant")
    chattering_threshold: float = Field(default=50.0, gt=0.0, description="Switches per 100 s flagged as chattering")
    default_rate_window: float = Field(default=60.0, gt=0.0, description="Arrival-rate estimation window t_w (s)")


# Global config instance
config = Config()


RATE_PRESETS: Dict[str, List[float]] = {
    "measured": [0.11, 0.125, 0.01, 0.01],
    "measured-peak": [0.154, 0.175, 0.014, 0.014],
}
RATE_PRESETS["veberod"] = RATE_PRESETS["measured"]
RATE_PRESETS["veberod-online"] = RATE_PRESETS["measured-peak"]

# Mean interarrival times 1/alpha per flow
SWEEP_PRESETS: Dict[str, List[List[float]]] = {
    "load-grid": [
        [5, 5, 20, 20],
        [5, 6, 20, 20],
        [5, 7, 20, 20],
        [5, 8, 20, 20],
        [6, 6, 20, 20],
        [6, 7, 20, 20],
        [6, 8, 20, 20],
        [7, 7, 20, 20],
        [7, 8, 20, 20],
        [8, 8, 20, 20],
        [6, 6, 10, 20],
        [6, 6, 15, 20],
        [6, 6, 25, 20],
    ],
}


class OptimizerSettings(BaseModel):
    """Gradient-descent settings"""
    model_config = ConfigDict(extra="forbid")

    iterations: int = Field(default=20, ge=0, description="Gradient steps (batch)")
    replications: int = Field(default=20, ge=1, description="Sample paths per iteration")
    path_length: float = Field(default=1000.0, gt=0.0, description="Sample path length T (s)")
    step_size: float = Field(default=2.0, gt=0.0, description="Base step size rho_0")
    step_decay: bool = Field(default=False, description="Use rho_0 / ceil(l / 10)")
    smoothing_weights: List[float] = Field(default=[0.6, 0.4], description="Current/previous window weights")
    smoothing_target: str = Field(default="gradient", description="gradient or cost")
    lower_bound: float = Field(default=0.1, gt=0.0, description="Floor for theta3, theta4 and s1..s4")
    window_length: float = Field(default=1200.0, gt=0.0, description="Online window length (s)")
    total_horizon: float = Field(default=43200.0, gt=0.0, description="Online horizon (s)")

    @field_validator("smoothing_weights")
    @classmethod
    def _weights_valid(cls, v):
        if len(v) != 2 or any(w < 0 for w in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("smoothing_weights must be two nonnegative reals summing to 1")
        return v

    @field_validator("smoothing_target")
    @classmethod
    def _target_valid(cls, v):
        if v not in ("gradient", "cost"):
            raise ValueError("smoothing_target must be 'gradient' or 'cost'")
        return v


class FluidSettings(BaseModel):
    """Piecewise-constant fluid input process"""
    model_config = ConfigDict(extra="forbid")

    segment_mean: float = Field(default=30.0, gt=0.0)
    rate_spread: float = Field(default=1.0, ge=0.0, le=1.0)
    off_probability: float = Field(default=0.0, ge=0.0, lt=1.0)


class GradientSettings(BaseModel):
    """IPA and finite-difference options"""
    model_config = ConfigDict(extra="forbid")

    delta: Optional[List[float]] = Field(default=None, description="Central-difference steps, default 0.05 each")
    literal_cost_indexing: bool = Field(default=False)
    switch_wait_derivative: bool = Field(default=False, description="w' = -tau' for waiting clocks started by a switch")
    horizon: float = Field(default=1000.0, gt=0.0, description="Path length for gradient validation (s)")

    @field_validator("delta")
    @classmethod
    def _delta_valid(cls, v):
        if v is not None and (len(v) != NUM_PARAMETERS or any(d <= 0 for d in v)):
            raise ValueError(f"delta must be {NUM_PARAMETERS} positive reals")
        return v


class BaselineSettings(BaseModel):
    """Uncontrolled-intersection comparison"""
    model_config = ConfigDict(extra="forbid")

    conflict_headway: float = Field(default=2.5, gt=0.0, description="Headway between vehicles of different roads (s)")
    scaling_factors: List[float] = Field(default=[1.0, 1.2, 1.4, 1.6, 1.8, 2.0])

    @field_validator("scaling_factors")
    @classmethod
    def _positive(cls, v):
        if not v or any(f <= 0 for f in v):
            raise ValueError("scaling_factors must be positive")
        return v


class ExperimentConfig(BaseModel):
    """One experiment run, loaded from YAML"""
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioName = Field(..., description="Scenario to run")
    mode: SimulationMode = Field(default=SimulationMode.DISCRETE, description="fluid or discrete")
    preset: Optional[str] = Field(default=None, description="Named arrival-rate preset")
    arrival_rates: Optional[List[float]] = Field(default=None, description="Mean arrival rates (1/s)")
    interarrival: Optional[List[float]] = Field(default=None, description="Mean interarrival times (s)")
    sweep: Optional[Union[str, List[List[float]]]] = Field(default=None, description="Interarrival rows or preset name")
    departure_rate: float = Field(default=1.2, gt=0.0, description="Maximum departure rate H (1/s)")
    weights: List[float] = Field(default=[1.0, 1.0, 1.0, 1.0], description="Cost weights per flow")
    initial_parameters: List[float] = Field(default=list(DEFAULT_PARAMETERS), description="Initial parameter vector")
    horizon: float = Field(default=1000.0, gt=0.0, description="Sample path length for simulate (s)")
    replications: int = Field(default=20, ge=1, description="Seeds evaluated by simulate/compare-baseline")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master seed")
    rate_window: Optional[float] = Field(default=None, gt=0.0, description="Rate estimation window t_w (s)")
    approach_time: float = Field(default=14.4, ge=0.0, description="Detection-to-stop-line travel time of discrete vehicles (s)")
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    fluid: FluidSettings = Field(default_factory=FluidSettings)
    gradient: GradientSettings = Field(default_factory=GradientSettings)
    baseline: BaselineSettings = Field(default_factory=BaselineSettings)
    perturbations: List[RatePerturbation] = Field(default_factory=list)
    output_dir: str = Field(default="results", description="Artifact directory")

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, v):
        if v is not None and v not in RATE_PRESETS:
            raise ValueError(f"unknown preset '{v}', expected one of {sorted(RATE_PRESETS)}")
        return v

    @field_validator("weights")
    @classmethod
    def _weights_valid(cls, v):
        if len(v) != NUM_FLOWS or any(w < 0 for w in v):
            raise ValueError(f"weights must be {NUM_FLOWS} nonnegative reals")
        return v

    @field_validator("initial_parameters")
    @classmethod
    def _parameters_valid(cls, v):
        try:
            check_parameter_constraints(v)
        except ParameterConstraintError as e:
            raise ValueError(e.message) from e
        return [float(p) for p in v]

    @model_validator(mode="after")
    def _resolve_rates(self) -> "ExperimentConfig":
        sources = [k for k in ("preset", "arrival_rates", "interarrival") if getattr(self, k) is not None]
        if len(sources) > 1:
            raise ValueError(f"give only one of preset, arrival_rates, interarrival (got {', '.join(sources)})")
        if self.preset is not None:
            self.arrival_rates = list(RATE_PRESETS[self.preset])
        elif self.interarrival is not None:
            if len(self.interarrival) != NUM_FLOWS or any(t <= 0 for t in self.interarrival):
                raise ValueError(f"interarrival must be {NUM_FLOWS} positive reals")
            self.arrival_rates = [1.0 / t for t in self.interarrival]
        if self.arrival_rates is not None:
            if len(self.arrival_rates) != NUM_FLOWS or any(r <= 0 for r in self.arrival_rates):
                raise ValueError(f"arrival_rates must be {NUM_FLOWS} positive reals")

        if isinstance(self.sweep, str):
            if self.sweep not in SWEEP_PRESETS:
                raise ValueError(f"unknown sweep preset '{self.sweep}'")
            self.sweep = [list(map(float, row)) for row in SWEEP_PRESETS[self.sweep]]
        if self.sweep is not None:
            for row in self.sweep:
                if len(row) != NUM_FLOWS or any(t <= 0 for t in row):
                    raise ValueError(f"sweep rows must be {NUM_FLOWS} positive interarrival times")

        if self.scenario == ScenarioName.SWEEP:
            if not self.sweep:
                raise ValueError("scenario 'sweep' requires sweep rows")
        elif self.arrival_rates is None:
            raise ValueError(f"scenario '{self.scenario.value}' requires arrival rates")
        return self

    @property
    def resolved_rate_window(self) -> float:
        return self.rate_window if self.rate_window is not None else config.default_rate_window


def _format_location(loc) -> str:
    return ".".join(str(part) for part in loc)


def load_config_document(data: Dict[str, Any], source: str = "<dict>") -> ExperimentConfig:
    """Validate an already-parsed config mapping

    Raises:
        ConfigurationError: With the dotted key path of the first failure
    """
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _format_location(first.get("loc", ()))
        if first.get("type") == "extra_forbidden":
            message = f"{source}: unknown key '{key}'"
        else:
            message = f"{source}: {key or 'config'}: {first.get('msg')}"
        raise ConfigurationError(message, config_key=key or None) from e


def parse_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Load and validate an experiment config from YAML

    Args:
        path: YAML file
        overrides: Top-level keys replacing file values (CLI flags)

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigurationError: Missing file, malformed YAML or invalid values
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}", config_key="path")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: invalid YAML: {e}") from e
    if isinstance(data, dict) and overrides:
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    return load_config_document(data, source=str(path))


def dump_resolved_config(experiment: ExperimentConfig) -> str:
    """Render the resolved config as deterministic YAML"""
    payload = experiment.model_dump(mode="json", exclude={"preset", "interarrival"})
    return yaml.safe_dump(payload, sort_keys=True, default_flow_style=None)
