"""
Plans, the population's option space and the three cost functions.

Every function here is pure and evaluates on read-only numpy data, so it is
safe to call from the harness worker threads.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigurationError, DimensionError, InvalidSelectionError

Selection = Tuple[int, int]  # (agent_id, plan_index)


@dataclass(frozen=True)
class Plan:
    values: np.ndarray
    discomfort_score: float


@dataclass(frozen=True, eq=False)
class PlanSet:
    """The k possible plans of one agent, stored as a k×m matrix plus k scores."""
    agent_id: int
    values: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        scores = np.array(self.scores, dtype=np.float64, copy=True).reshape(-1)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise ConfigurationError(f"agent {self.agent_id} needs at least one plan of dimension >= 1, got shape {values.shape}")
        if scores.shape[0] != values.shape[0]:
            raise ConfigurationError(f"agent {self.agent_id} has {values.shape[0]} plans but {scores.shape[0]} discomfort scores")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError(f"agent {self.agent_id} has non-finite plan values")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0):
            raise ConfigurationError(f"agent {self.agent_id} has a discomfort score that is negative or not finite")
        values.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def from_plans(cls, agent_id: int, plans: Iterable[Plan]) -> "PlanSet":
        plans = list(plans)
        if not plans:
            raise ConfigurationError(f"agent {agent_id} has no plans")
        dimensions = {len(p.values) for p in plans}
        if len(dimensions) != 1:
            raise DimensionError(f"agent {agent_id} mixes plan dimensions {sorted(dimensions)}")
        return cls(agent_id, np.vstack([np.asarray(p.values, dtype=np.float64) for p in plans]),
                   np.array([p.discomfort_score for p in plans], dtype=np.float64))

    @property
    def num_plans(self) -> int:
        return self.values.shape[0]

    @property
    def plan_size(self) -> int:
        return self.values.shape[1]

    def plan(self, index: int) -> Plan:
        return Plan(self.values[index], float(self.scores[index]))

    @property
    def plans(self) -> Tuple[Plan, ...]:
        return tuple(self.plan(j) for j in range(self.num_plans))

    def __len__(self) -> int:
        return self.num_plans


class CostKind(str, Enum):
    VARIANCE = "VARIANCE"
    RMSE = "RMSE"


class CostFunctionSpec(BaseModel):
    """Selects the inefficiency cost: population variance, or RMSE against a target."""
    model_config = ConfigDict(frozen=True)

    kind: CostKind = CostKind.VARIANCE
    target: Optional[Tuple[float, ...]] = None

    @model_validator(mode="after")
    def _target_iff_rmse(self) -> "CostFunctionSpec":
        if (self.kind is CostKind.RMSE) != (self.target is not None):
            raise ValueError("a target is required for RMSE and forbidden for VARIANCE")
        return self

    def target_array(self, plan_size: Optional[int] = None) -> Optional[np.ndarray]:
        if self.target is None:
            return None
        target = np.asarray(self.target, dtype=np.float64)
        if plan_size is not None and target.shape[0] != plan_size:
            raise DimensionError(f"RMSE target has {target.shape[0]} elements, plans have {plan_size}")
        return target


class BehaviorWeights(BaseModel):
    """Unfairness weight alpha and discomfort weight beta; inefficiency gets 1 - alpha - beta."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.0, ge=0.0, le=1.0)
    beta: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _weights_leave_inefficiency_non_negative(self) -> "BehaviorWeights":
        if self.alpha + self.beta > 1.0 + 1e-12:
            raise ValueError(f"alpha + beta must be <= 1, got {self.alpha} + {self.beta}")
        return self

    @property
    def inefficiency_weight(self) -> float:
        return max(0.0, 1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class CostTriple:
    inefficiency: float
    mean_discomfort: float
    unfairness: float

    def __post_init__(self):
        if self.unfairness < 0 or self.mean_discomfort < 0:
            raise ValueError(f"unfairness and mean discomfort must be >= 0, got {self}")


def plan_dimension(plan_sets: Sequence[PlanSet]) -> int:
    """Returns m, checking that every agent shares it and that agent ids are 0..n-1 in order."""
    if not plan_sets:
        raise ConfigurationError("at least one agent is required")
    dimensions = {ps.plan_size for ps in plan_sets}
    if len(dimensions) != 1:
        raise DimensionError(f"plan dimension differs across agents: {sorted(dimensions)}")
    for position, plan_set in enumerate(plan_sets):
        if plan_set.agent_id != position:
            raise ConfigurationError(f"plan set at position {position} belongs to agent {plan_set.agent_id}")
    return dimensions.pop()


def inefficiency_rows(rows: np.ndarray, spec: CostFunctionSpec, target: Optional[np.ndarray] = None) -> np.ndarray:
    """Inefficiency of every row of a (c, m) matrix of candidate global plans."""
    if spec.kind is CostKind.VARIANCE:
        return np.var(rows, axis=-1)
    if target is None:
        target = spec.target_array(rows.shape[-1])
    return np.sqrt(np.mean((rows - target) ** 2, axis=-1))


def inefficiency_cost(global_plan: Sequence[float], spec: CostFunctionSpec) -> float:
    g = np.asarray(global_plan, dtype=np.float64)
    if spec.kind is CostKind.VARIANCE:
        return float(np.var(g))
    target = spec.target_array(g.shape[0])
    return float(np.sqrt(np.mean((g - target) ** 2)))


def selected_scores(selections: Sequence[Selection], plan_sets: Sequence[PlanSet]) -> np.ndarray:
    """Discomfort scores of the selected plans in agent order; rejects missing or duplicate agents."""
    n = len(plan_sets)
    scores = np.full(n, np.nan)
    seen = set()
    for agent_id, plan_index in selections:
        if not 0 <= agent_id < n:
            raise InvalidSelectionError(f"unknown agent {agent_id}")
        if agent_id in seen:
            raise InvalidSelectionError(f"agent {agent_id} is selected more than once")
        if not 0 <= plan_index < plan_sets[agent_id].num_plans:
            raise InvalidSelectionError(f"agent {agent_id} has no plan {plan_index}")
        seen.add(agent_id)
        scores[agent_id] = plan_sets[agent_id].scores[plan_index]
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise InvalidSelectionError(f"no selection for agents {missing[:10]}")
    return scores


def mean_discomfort(selections: Sequence[Selection], plan_sets: Sequence[PlanSet]) -> float:
    return float(np.mean(selected_scores(selections, plan_sets)))


def unfairness_cost(selections: Sequence[Selection], plan_sets: Sequence[PlanSet]) -> float:
    return float(np.var(selected_scores(selections, plan_sets)))


def combine_costs(costs: CostTriple, weights: BehaviorWeights) -> float:
    """The weighted sum (1 - alpha - beta)*I + alpha*U + beta*D."""
    return (weights.inefficiency_weight * costs.inefficiency
            + weights.alpha * costs.unfairness
            + weights.beta * costs.mean_discomfort)


def weighted_objective(global_plan: Sequence[float], selections: Sequence[Selection],
                       plan_sets: Sequence[PlanSet], weights: BehaviorWeights,
                       spec: CostFunctionSpec) -> float:
    scores = selected_scores(selections, plan_sets)
    costs = CostTriple(inefficiency_cost(global_plan, spec), float(np.mean(scores)), float(np.var(scores)))
    return combine_costs(costs, weights)


def as_selections(indices: Sequence[int]) -> Tuple[Selection, ...]:
    return tuple((agent_id, int(plan_index)) for agent_id, plan_index in enumerate(indices))


def global_plan_of(plan_sets: Sequence[PlanSet], indices: Sequence[int]) -> np.ndarray:
    """Element-wise sum of the selected plans, accumulated in agent order."""
    total = np.zeros(plan_sets[0].plan_size, dtype=np.float64)
    for plan_set, plan_index in zip(plan_sets, indices):
        total += plan_set.values[plan_index]
    return total


def system_costs(plan_sets: Sequence[PlanSet], indices: Sequence[int], spec: CostFunctionSpec) -> Tuple[np.ndarray, CostTriple]:
    """Exact global plan and cost triple of a full selection (one plan index per agent)."""
    if len(indices) != len(plan_sets):
        raise InvalidSelectionError(f"expected {len(plan_sets)} selections, got {len(indices)}")
    global_plan = global_plan_of(plan_sets, indices)
    scores = np.array([ps.scores[j] for ps, j in zip(plan_sets, indices)], dtype=np.float64)
    costs = CostTriple(inefficiency_cost(global_plan, spec), float(np.mean(scores)), float(np.var(scores)))
    return global_plan, costs
