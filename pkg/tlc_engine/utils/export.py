"""
CSV/JSON artifact writers
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import pandas as pd
from pydantic import BaseModel

from ..core.models import PARAMETER_NAMES, OptimizationTrajectory
from ..services.simulator import EventTrace

TRACE_COLUMNS = [
    "time", "event_kind", "flow",
    "x1", "x2", "x3", "x4", "z1", "z2", "w3", "w4",
    "u1", "region", "p1", "p2",
    "alpha_est_1", "alpha_est_2", "alpha_est_3", "alpha_est_4",
]
TRAJECTORY_COLUMNS = ["iteration", *PARAMETER_NAMES, "J_hat", "grad_norm", "rho"]
ONLINE_COLUMNS = ["window", "t_start", "t_end", *PARAMETER_NAMES, "cost", "grad_norm", "rho"]
FLOAT_FORMAT = "%.9f"


def _frame(rows: List[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=list(columns))


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def trace_frame(trace: EventTrace) -> pd.DataFrame:
    """One row per record with the post-event state"""
    rows = []
    for r in trace.records:
        rows.append({
            "time": r.tau,
            "event_kind": r.kind.value,
            "flow": r.flow,
            "x1": r.x[0], "x2": r.x[1], "x3": r.x[2], "x4": r.x[3],
            "z1": r.z[0], "z2": r.z[1],
            "w3": r.w[0], "w4": r.w[1],
            "u1": r.u[0],
            "region": r.region.value,
            "p1": r.p[0], "p2": r.p[1],
            "alpha_est_1": r.alpha[0], "alpha_est_2": r.alpha[1],
            "alpha_est_3": r.alpha[2], "alpha_est_4": r.alpha[3],
        })
    return _frame(rows, TRACE_COLUMNS)


def write_trace_csv(trace: EventTrace, path: Union[str, Path]) -> Path:
    return write_csv(trace_frame(trace), path)


def trajectory_frame(trajectory: OptimizationTrajectory) -> pd.DataFrame:
    """Batch trajectory: iteration, parameters, J_hat, grad_norm, rho"""
    rows = []
    for record in trajectory.records:
        row = {"iteration": record.iteration}
        row.update(dict(zip(PARAMETER_NAMES, record.parameters)))
        row.update({"J_hat": record.cost, "grad_norm": record.grad_norm, "rho": record.step_size})
        rows.append(row)
    return _frame(rows, TRAJECTORY_COLUMNS)


def online_frame(trajectory: OptimizationTrajectory) -> pd.DataFrame:
    """Windowed cost and parameters of an online run"""
    rows = []
    for record in trajectory.records:
        row = {"window": record.iteration, "t_start": record.t_start, "t_end": record.t_end}
        row.update(dict(zip(PARAMETER_NAMES, record.parameters)))
        row.update({"cost": record.cost, "grad_norm": record.grad_norm, "rho": record.step_size})
        rows.append(row)
    return _frame(rows, ONLINE_COLUMNS)


def rows_frame(rows: List[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return _frame(rows, columns)


def write_json(payload: Union[BaseModel, Dict[str, Any]], path: Union[str, Path]) -> Path:
    """Stable JSON (sorted keys, no timestamps) so re-runs are byte-identical"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json", by_alias=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
