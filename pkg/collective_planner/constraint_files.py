"""
The two hard-constraint CSV files.

Global file rows are `elementIndex,operator,value`; cost file rows are
`costName,operator,value` with costName one of INEFFICIENCY, DISCOMFORT or
UNFAIRNESS. The operator is LEQ (upper bound) or GEQ (lower bound). Blank
lines and lines starting with `#` are skipped.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from .constraints import ConstraintEnvelope, CostEnvelope, ScalarBound
from .errors import ConstraintFileError, ResultWriteError

constraint_files_logger = logging.getLogger(__name__)

OPERATORS = {"LEQ": "upper", "GEQ": "lower"}
COST_NAMES = {"INEFFICIENCY": "inefficiency", "DISCOMFORT": "mean_discomfort", "UNFAIRNESS": "unfairness"}


def _rows(path: Path) -> Iterator[Tuple[int, List[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            for line_number, row in enumerate(csv.reader(handle), start=1):
                cells = [cell.strip() for cell in row]
                if not any(cells) or cells[0].startswith("#"):
                    continue
                if len(cells) != 3:
                    raise ConstraintFileError(f"expected 3 columns, got {len(cells)}", path, line_number)
                yield line_number, cells
    except OSError as e:
        raise ConstraintFileError(f"cannot read file ({e.strerror or e})", path) from e


def _operator(cell: str, path: Path, line_number: int) -> str:
    side = OPERATORS.get(cell.upper())
    if side is None:
        raise ConstraintFileError(f"unknown operator '{cell}' (expected LEQ or GEQ)", path, line_number)
    return side


def _value(cell: str, path: Path, line_number: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ConstraintFileError(f"'{cell}' is not a number", path, line_number) from None


def parse_global_constraints(path: Path, plan_size: int) -> ConstraintEnvelope:
    path = Path(path)
    bounds: Dict[str, List[Optional[float]]] = {"upper": [None] * plan_size, "lower": [None] * plan_size}
    seen = set()
    for line_number, (index_cell, operator_cell, value_cell) in _rows(path):
        try:
            index = int(index_cell)
        except ValueError:
            raise ConstraintFileError(f"'{index_cell}' is not an element index", path, line_number) from None
        if not 0 <= index < plan_size:
            raise ConstraintFileError(f"element index {index} is outside [0, {plan_size})", path, line_number)
        side = _operator(operator_cell, path, line_number)
        if (index, side) in seen:
            raise ConstraintFileError(f"duplicate {operator_cell.upper()} bound for element {index}", path, line_number)
        seen.add((index, side))
        bounds[side][index] = _value(value_cell, path, line_number)
    try:
        return ConstraintEnvelope(upper=bounds["upper"], lower=bounds["lower"])
    except ValueError as e:
        raise ConstraintFileError(str(e), path) from e


def parse_cost_constraints(path: Path) -> CostEnvelope:
    path = Path(path)
    bounds: Dict[str, Dict[str, float]] = {field: {} for field in COST_NAMES.values()}
    for line_number, (name_cell, operator_cell, value_cell) in _rows(path):
        field = COST_NAMES.get(name_cell.upper())
        if field is None:
            raise ConstraintFileError(f"unknown cost '{name_cell}' (expected one of {', '.join(COST_NAMES)})", path, line_number)
        side = _operator(operator_cell, path, line_number)
        if side in bounds[field]:
            raise ConstraintFileError(f"duplicate {operator_cell.upper()} bound for {name_cell.upper()}", path, line_number)
        bounds[field][side] = _value(value_cell, path, line_number)
    try:
        return CostEnvelope(**{field: ScalarBound(**sides) for field, sides in bounds.items()})
    except ValueError as e:
        raise ConstraintFileError(str(e), path) from e


def parse_constraint_files(global_path: Optional[Path], cost_path: Optional[Path],
                           plan_size: int) -> Tuple[Optional[ConstraintEnvelope], Optional[CostEnvelope]]:
    """Either file may be absent; an absent or empty file leaves that side unconstrained."""
    plan_env = parse_global_constraints(global_path, plan_size) if global_path is not None else None
    cost_env = parse_cost_constraints(cost_path) if cost_path is not None else None
    constraint_files_logger.debug(f"Constraints: global {'active' if plan_env is not None and plan_env.is_active else 'none'}, "
                                  f"cost {'active' if cost_env is not None and cost_env.is_active else 'none'}")
    return plan_env, cost_env


def write_constraint_files(plan_env: Optional[ConstraintEnvelope], cost_env: Optional[CostEnvelope],
                           global_path: Path, cost_path: Path):
    """Writes both files in the format parse_constraint_files reads."""
    operator_of = {side: code for code, side in OPERATORS.items()}
    name_of = {field: name for name, field in COST_NAMES.items()}
    try:
        with open(global_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            if plan_env is not None:
                for side, bounds in (("upper", plan_env.upper), ("lower", plan_env.lower)):
                    for index, value in enumerate(bounds):
                        if value is not None:
                            writer.writerow([index, operator_of[side], repr(value)])
        with open(cost_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            if cost_env is not None:
                for field, bound in cost_env.items():
                    for side in ("upper", "lower"):
                        value = getattr(bound, side)
                        if value is not None:
                            writer.writerow([name_of[field], operator_of[side], repr(value)])
    except OSError as e:
        raise ResultWriteError(Path(e.filename or global_path), e.strerror or str(e)) from e
