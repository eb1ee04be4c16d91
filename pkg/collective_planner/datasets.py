"""
Plan-file datasets and synthetic scenarios.

A dataset directory holds one `agent_<i>.plans` file per agent. Each line is
one possible plan written as `score:v1,v2,...,vm`. An optional `target.csv`
holds the RMSE target, one value per line.
"""
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ConfigurationError, DimensionError, PlanParseError, ResultWriteError
from .plans import CostFunctionSpec, CostKind, PlanSet

datasets_logger = logging.getLogger(__name__)

PLAN_FILE_PATTERN = re.compile(r"^agent_(\d+)\.plans$")
TARGET_FILE = "target.csv"


class ScenarioKind(str, Enum):
    ENERGY_LIKE = "ENERGY_LIKE"
    BIKE_LIKE = "BIKE_LIKE"
    UAV_LIKE = "UAV_LIKE"
    FILE = "FILE"

    @classmethod
    def parse(cls, value: "str | ScenarioKind") -> "ScenarioKind":
        if isinstance(value, ScenarioKind):
            return value
        name = str(value).strip().upper()
        if not name.endswith("_LIKE") and name != "FILE":
            name = f"{name}_LIKE"
        return cls(name)


# (num_plans, plan_size) per generated kind; BIKE_LIKE draws k per agent up to the first value.
SCENARIO_SHAPES = {
    ScenarioKind.ENERGY_LIKE: (10, 144),
    ScenarioKind.BIKE_LIKE: (24, 98),
    ScenarioKind.UAV_LIKE: (64, 64),
}


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ScenarioKind = ScenarioKind.ENERGY_LIKE
    num_agents: int = Field(default=1000, ge=1)
    num_plans: Optional[int] = Field(default=None, ge=1)
    plan_size: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    plan_dir: Optional[Path] = None

    @field_validator("kind", mode="before")
    @classmethod
    def _parse_kind(cls, value):
        return ScenarioKind.parse(value)

    @property
    def resolved_num_plans(self) -> int:
        return self.num_plans or SCENARIO_SHAPES[self.kind][0]

    @property
    def resolved_plan_size(self) -> int:
        if self.kind is ScenarioKind.UAV_LIKE and self.plan_size is not None:
            side = int(round(self.plan_size ** 0.5))
            if side * side != self.plan_size:
                raise DimensionError(f"UAV_LIKE plan size must be a square grid, got {self.plan_size}", key="planSize")
        return self.plan_size or SCENARIO_SHAPES[self.kind][1]


@dataclass(frozen=True)
class Scenario:
    plan_sets: Tuple[PlanSet, ...]
    cost_spec: CostFunctionSpec


def _parse_plan_line(line: str, path: Path, line_number: int) -> Tuple[float, List[float]]:
    score_text, separator, values_text = line.partition(":")
    if not separator:
        raise PlanParseError("expected 'score:v1,...,vm'", path, line_number)
    try:
        score = float(score_text)
        values = [float(v) for v in values_text.split(",")]
    except ValueError as e:
        raise PlanParseError(f"not a number ({e})", path, line_number) from e
    return score, values


def _read_lines(path: Path) -> List[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise PlanParseError(f"not valid UTF-8 text (byte {e.start})", path) from e
    except OSError as e:
        raise PlanParseError(f"cannot read ({e.strerror or e})", path) from e


def _load_plan_file(path: Path, agent_id: int, plan_size: Optional[int]) -> PlanSet:
    scores: List[float] = []
    rows: List[List[float]] = []
    for line_number, raw in enumerate(_read_lines(path), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        score, values = _parse_plan_line(line, path, line_number)
        expected = plan_size if plan_size is not None else (len(rows[0]) if rows else None)
        if expected is not None and len(values) != expected:
            raise DimensionError(f"{path}:{line_number}: plan has {len(values)} values, expected {expected}")
        scores.append(score)
        rows.append(values)
    if not rows:
        raise PlanParseError("file holds no plans", path)
    try:
        return PlanSet(agent_id, np.array(rows), np.array(scores))
    except DimensionError:
        raise
    except Exception as e:
        raise PlanParseError(str(e), path) from e


def load_plan_sets(directory: Path) -> List[PlanSet]:
    """Loads every agent_<i>.plans file, ordered by i; agent ids become 0..n-1 in that order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise PlanParseError("plan directory does not exist", directory)
    indexed = sorted((int(match.group(1)), path) for path in directory.iterdir()
                     if (match := PLAN_FILE_PATTERN.match(path.name)))
    if not indexed:
        raise PlanParseError("no agent_<i>.plans files found", directory)

    plan_sets: List[PlanSet] = []
    plan_size: Optional[int] = None
    for agent_id, (_, path) in enumerate(indexed):
        plan_set = _load_plan_file(path, agent_id, plan_size)
        plan_size = plan_set.plan_size
        plan_sets.append(plan_set)
    datasets_logger.info(f"Loaded {len(plan_sets)} agent(s) with plan size {plan_size} from {directory}")
    return plan_sets


def load_target(directory: Path) -> Optional[Tuple[float, ...]]:
    path = Path(directory) / TARGET_FILE
    if not path.exists():
        return None
    values = []
    for line_number, raw in enumerate(_read_lines(path), start=1):
        if not raw.strip():
            continue
        try:
            values.append(float(raw))
        except ValueError as e:
            raise PlanParseError(f"not a number ({e})", path, line_number) from e
    return tuple(values)


def write_plan_sets(plan_sets: Sequence[PlanSet], directory: Path, target: Optional[Sequence[float]] = None) -> Path:
    """Writes one plan file per agent (the inverse of load_plan_sets) and the optional target."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for plan_set in plan_sets:
            lines = [f"{score!r}:" + ",".join(repr(float(v)) for v in values)
                     for score, values in zip(plan_set.scores.tolist(), plan_set.values)]
            (directory / f"agent_{plan_set.agent_id}.plans").write_text("\n".join(lines) + "\n", encoding="utf-8")
        if target is not None:
            (directory / TARGET_FILE).write_text("".join(f"{float(v)!r}\n" for v in target), encoding="utf-8")
    except OSError as e:
        raise ResultWriteError(directory, e.strerror or str(e)) from e
    return directory


def _energy_like(rng: np.random.Generator, spec: ScenarioSpec) -> Scenario:
    """Daily load curves; each plan shifts the agent's curve in time, discomfort grows with the shift."""
    k, m = spec.resolved_num_plans, spec.resolved_plan_size
    max_shift = max(1, m // 4)
    t = np.arange(m) / m
    plan_sets = []
    for agent in range(spec.num_agents):
        amplitude = rng.uniform(0.5, 2.0)
        evening_peak = rng.uniform(0.6, 0.85)
        base = amplitude * (0.4 + np.exp(-((t - evening_peak) ** 2) / 0.005)
                            + 0.5 * np.exp(-((t - rng.uniform(0.25, 0.4)) ** 2) / 0.01))
        base = np.clip(base + rng.normal(0.0, 0.05 * amplitude, m), 0.0, None)
        shifts = np.concatenate(([0], rng.integers(-max_shift, max_shift + 1, size=k - 1)))
        values = np.vstack([np.roll(base, int(shift)) for shift in shifts])
        plan_sets.append(PlanSet(agent, values, np.abs(shifts) / max_shift))
    return Scenario(tuple(plan_sets), CostFunctionSpec())


def _bike_like(rng: np.random.Generator, spec: ScenarioSpec) -> Scenario:
    """Sparse station in/out counts: a trip takes one bike out of a station and returns it at another."""
    k_max, m = spec.resolved_num_plans, spec.resolved_plan_size
    if m < 2:
        raise DimensionError("BIKE_LIKE needs at least two stations", key="planSize")
    plan_sets = []
    for agent in range(spec.num_agents):
        k = int(rng.integers(1, k_max + 1))
        values = np.zeros((k, m))
        for j in range(k):
            for _ in range(int(rng.integers(1, 4))):
                origin, destination = rng.choice(m, size=2, replace=False)
                values[j, origin] -= 1.0
                values[j, destination] += 1.0
        scores = np.arange(k) / max(k - 1, 1)   # plans are listed in order of preference
        plan_sets.append(PlanSet(agent, values, scores))
    return Scenario(tuple(plan_sets), CostFunctionSpec())


def _uav_like(rng: np.random.Generator, spec: ScenarioSpec) -> Scenario:
    """
    Each plan senses one grid cell with some intensity; discomfort is the
    travel distance from the drone's base cell. The target is a smooth
    density scaled to the expected total sensing.
    """
    k, m = spec.resolved_num_plans, spec.resolved_plan_size
    side = int(round(m ** 0.5))
    cells = np.arange(m)
    coordinates = np.column_stack((cells // side, cells % side)).astype(np.float64)
    diagonal = max(np.hypot(side - 1, side - 1), 1.0)

    plan_sets = []
    for agent in range(spec.num_agents):
        base = coordinates[rng.integers(m)]
        chosen = rng.permutation(m)[:k] if k <= m else rng.choice(m, size=k, replace=True)
        intensity = rng.uniform(0.5, 1.5, size=k)
        values = np.zeros((k, m))
        values[np.arange(k), chosen] = intensity
        scores = np.hypot(*(coordinates[chosen] - base).T) / diagonal
        plan_sets.append(PlanSet(agent, values, scores))

    density = np.zeros(m)
    for _ in range(3):
        center = rng.uniform(0, side - 1, size=2)
        spread = rng.uniform(0.8, 2.0)
        density += np.exp(-np.sum((coordinates - center) ** 2, axis=1) / (2 * spread ** 2))
    target = density / density.sum() * spec.num_agents
    return Scenario(tuple(plan_sets), CostFunctionSpec(kind=CostKind.RMSE, target=tuple(float(v) for v in target)))


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Deterministic synthetic plan sets for the given kind and seed."""
    if spec.kind is ScenarioKind.FILE:
        if spec.plan_dir is None:
            raise ConfigurationError("FILE scenarios need a plan directory", key="planDir")
        plan_sets = load_plan_sets(spec.plan_dir)
        target = load_target(spec.plan_dir)
        cost_spec = CostFunctionSpec() if target is None else CostFunctionSpec(kind=CostKind.RMSE, target=target)
        return Scenario(tuple(plan_sets), cost_spec)

    rng = np.random.default_rng(spec.seed)
    generators = {ScenarioKind.ENERGY_LIKE: _energy_like, ScenarioKind.BIKE_LIKE: _bike_like, ScenarioKind.UAV_LIKE: _uav_like}
    scenario = generators[spec.kind](rng, spec)
    datasets_logger.debug(f"Generated {spec.kind.value} scenario: {len(scenario.plan_sets)} agents, seed {spec.seed}")
    return scenario
