"""
CSV emission of experiment reports.

Every file is written through pandas with a fixed float format and "\\n" line
endings, so identical reports give byte-identical files.
"""
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ResultWriteError

if TYPE_CHECKING:
    from .engine import RunState
    from .harness import ExperimentReport

results_logger = logging.getLogger(__name__)

TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_FILE = "summary.csv"
GLOBAL_PLAN_FILE = "global_plan.csv"
SHIFT_FILE = "behavioral_shift.csv"
LEVELS_FILE = "levels.csv"
LEVEL_PLANS_FILE = "level_global_plans.csv"

FLOAT_FORMAT = "%.17g"
RATE_FORMAT = "{:.6f}"
LEVEL_COLUMNS = ["level", "fraction", "satisfaction_rate", "mean_inefficiency", "lower_min", "lower_max", "upper_min", "upper_max"]
LEVEL_PLAN_COLUMNS = ["level", "element", "lower", "upper", "value"]


@dataclass(frozen=True)
class ResultRow:
    scope: str
    repetition: int
    iteration: int
    inefficiency: float
    mean_discomfort: float
    unfairness: float
    satisfied: bool
    objective: float

    @classmethod
    def from_state(cls, scope: str, repetition: int, state: "RunState") -> "ResultRow":
        return cls(scope, repetition, state.iteration, state.costs.inefficiency, state.costs.mean_discomfort,
                   state.costs.unfairness, state.satisfied, state.objective)


@dataclass(frozen=True)
class SummaryRow:
    scope: str
    repetitions: int
    satisfied: int
    satisfaction_rate: float
    best_objective: float
    mean_inefficiency: float
    mean_discomfort: float
    mean_unfairness: float


@dataclass
class ResultTables:
    """What read_results recovers from an output directory."""
    trajectory: List[ResultRow]
    summary: List[SummaryRow]
    global_plan: np.ndarray
    behavioral_shift: Optional[pd.DataFrame] = None
    levels: Optional[pd.DataFrame] = None
    level_global_plans: Optional[pd.DataFrame] = None


def summary_rows(report: "ExperimentReport") -> List[SummaryRow]:
    rows = []
    for part in report.walk():
        if not part.final_states:
            continue
        costs = part.mean_costs
        rows.append(SummaryRow(part.scope, part.tally.trials, part.tally.satisfied, part.satisfaction_rate,
                               part.best_objective, costs.inefficiency, costs.mean_discomfort, costs.unfairness))
    return rows


def _write_frame(frame: pd.DataFrame, path: Path, header: bool = True):
    try:
        frame.to_csv(path, index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise ResultWriteError(path, e.strerror or str(e)) from e


def _columns(row_type) -> List[str]:
    return [f.name for f in fields(row_type)]


def _level_frames(report: "ExperimentReport") -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    One row per level with the range of its bounds, and one row per level and
    plan element with that element's bounds and median final value. Absent
    bounds are left empty.
    """
    summary, elements = [], []
    for outcome in report.level_outcomes:
        upper, lower = outcome.envelope.upper_array(), outcome.envelope.lower_array()
        summary.append({"level": outcome.level, "fraction": outcome.fraction,
                        "satisfaction_rate": RATE_FORMAT.format(outcome.satisfaction_rate),
                        "mean_inefficiency": outcome.mean_inefficiency,
                        "lower_min": _nan_min(lower), "lower_max": _nan_max(lower),
                        "upper_min": _nan_min(upper), "upper_max": _nan_max(upper)})
        elements.append(pd.DataFrame({"level": outcome.level, "element": np.arange(upper.shape[0]),
                                      "lower": lower, "upper": upper, "value": outcome.median_global_plan}))
    if not elements:
        return pd.DataFrame(columns=LEVEL_COLUMNS), pd.DataFrame(columns=LEVEL_PLAN_COLUMNS)
    return pd.DataFrame(summary, columns=LEVEL_COLUMNS), pd.concat(elements, ignore_index=True)


def _nan_min(values: np.ndarray) -> float:
    return float(np.nanmin(values)) if not np.isnan(values).all() else np.nan


def _nan_max(values: np.ndarray) -> float:
    return float(np.nanmax(values)) if not np.isnan(values).all() else np.nan


def write_results(report: "ExperimentReport", output_dir: Path) -> Dict[str, Path]:
    """Writes the report's CSV files into output_dir and returns them by file name."""
    output_dir = Path(output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ResultWriteError(output_dir, e.strerror or str(e)) from e

    written: Dict[str, Path] = {}

    trajectory = pd.DataFrame([asdict(row) for row in report.all_rows()], columns=_columns(ResultRow))
    trajectory["satisfied"] = trajectory["satisfied"].astype(int)
    _write_frame(trajectory, output_dir / TRAJECTORY_FILE)
    written[TRAJECTORY_FILE] = output_dir / TRAJECTORY_FILE

    summary = pd.DataFrame([asdict(row) for row in summary_rows(report)], columns=_columns(SummaryRow))
    summary["satisfaction_rate"] = [RATE_FORMAT.format(rate) for rate in summary["satisfaction_rate"]]
    _write_frame(summary, output_dir / SUMMARY_FILE)
    written[SUMMARY_FILE] = output_dir / SUMMARY_FILE

    best = report.best_state
    if best is not None:
        _write_frame(pd.DataFrame({"value": best.global_plan}), output_dir / GLOBAL_PLAN_FILE, header=False)
        written[GLOBAL_PLAN_FILE] = output_dir / GLOBAL_PLAN_FILE

    if report.shift_curve is not None:
        shift = pd.DataFrame([asdict(point) for point in report.shift_curve])
        _write_frame(shift, output_dir / SHIFT_FILE)
        written[SHIFT_FILE] = output_dir / SHIFT_FILE

    if report.level_outcomes is not None:
        levels, level_plans = _level_frames(report)
        _write_frame(levels, output_dir / LEVELS_FILE)
        written[LEVELS_FILE] = output_dir / LEVELS_FILE
        _write_frame(level_plans, output_dir / LEVEL_PLANS_FILE)
        written[LEVEL_PLANS_FILE] = output_dir / LEVEL_PLANS_FILE

    results_logger.info(f"Wrote {', '.join(sorted(written))} to {output_dir}")
    return written


def _read(path: Path, **kwargs) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip", **kwargs)


def read_results(output_dir: Path) -> ResultTables:
    output_dir = Path(output_dir)
    trajectory = _read(output_dir / TRAJECTORY_FILE, dtype={"scope": str}, keep_default_na=False)
    summary = _read(output_dir / SUMMARY_FILE, dtype={"scope": str}, keep_default_na=False)

    global_plan_path = output_dir / GLOBAL_PLAN_FILE
    global_plan = np.empty(0)
    if global_plan_path.exists():
        global_plan = _read(global_plan_path, header=None)[0].to_numpy(dtype=np.float64)

    tables = ResultTables(
        trajectory=[ResultRow(str(r.scope), int(r.repetition), int(r.iteration), float(r.inefficiency),
                              float(r.mean_discomfort), float(r.unfairness), bool(r.satisfied), float(r.objective))
                    for r in trajectory.itertuples(index=False)],
        summary=[SummaryRow(str(r.scope), int(r.repetitions), int(r.satisfied), float(r.satisfaction_rate),
                            float(r.best_objective), float(r.mean_inefficiency), float(r.mean_discomfort),
                            float(r.mean_unfairness))
                 for r in summary.itertuples(index=False)],
        global_plan=global_plan)
    if (output_dir / SHIFT_FILE).exists():
        tables.behavioral_shift = _read(output_dir / SHIFT_FILE)
    if (output_dir / LEVELS_FILE).exists():
        tables.levels = _read(output_dir / LEVELS_FILE)
    if (output_dir / LEVEL_PLANS_FILE).exists():
        tables.level_global_plans = _read(output_dir / LEVEL_PLANS_FILE)
    return tables
