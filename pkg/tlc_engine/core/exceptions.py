"""
Custom exceptions for TLC Engine
"""


class TLCEngineError(Exception):
    """Base exception for TLC Engine"""
    def __init__(self, message: str, error_code: str = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or "GENERIC_ERROR"


class ParameterConstraintError(TLCEngineError):
    """A controllable parameter violates its feasibility constraint"""
    def __init__(self, message: str, index: int = None, constraint: str = None):
        super().__init__(message, "PARAMETER_CONSTRAINT_VIOLATION")
        self.index = index
        self.constraint = constraint


class EventSkippedError(TLCEngineError):
    """An integration step stepped over an event (engine bug guard)"""
    def __init__(self, message: str, time: float = None, dt: float = None):
        super().__init__(message, "EVENT_SKIPPED")
        self.time = time
        self.dt = dt


class NonconvergenceError(TLCEngineError):
    """Sample path produced too many events before the horizon"""
    def __init__(self, message: str, events: int = None, time: float = None):
        super().__init__(message, "NONCONVERGENCE")
        self.events = events
        self.time = time


class InfeasibleDeltaError(TLCEngineError):
    """Finite-difference step collapsed to zero after projection"""
    def __init__(self, message: str, index: int = None):
        super().__init__(message, "INFEASIBLE_DELTA")
        self.index = index


class OptimizationError(TLCEngineError):
    """Failure inside a gradient-descent iteration"""
    def __init__(self, message: str, iteration: int = None):
        super().__init__(message, "OPTIMIZATION_ERROR")
        self.iteration = iteration


class ScenarioError(TLCEngineError):
    """Scenario could not be executed"""
    def __init__(self, message: str, scenario: str = None):
        super().__init__(message, "SCENARIO_ERROR")
        self.scenario = scenario


class ConfigurationError(TLCEngineError):
    """Configuration related errors"""
    def __init__(self, message: str, config_key: str = None):
        super().__init__(message, "CONFIGURATION_ERROR")
        self.config_key = config_key
