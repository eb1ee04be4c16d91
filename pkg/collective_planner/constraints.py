"""
Hard constraints: bound envelopes on the global plan and on the aggregate
costs, the cold-start expected-satisfaction choice, and satisfaction tallies.

Bounds are inclusive. A bound that is absent, NaN or infinite does not
constrain anything and contributes zero to the expected satisfaction.
"""
import math
from dataclasses import dataclass
from typing import Any, Iterator, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import DimensionError, UndefinedRateError
from .plans import CostFunctionSpec, CostTriple, Plan, PlanSet, inefficiency_rows

OptionalBound = Optional[float]


def _normalize_bound(value: Any) -> OptionalBound:
    if value is None:
        return None
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        return None
    return value


class ConstraintEnvelope(BaseModel):
    """Per-element upper and lower bounds on the global plan (None = unconstrained)."""
    model_config = ConfigDict(frozen=True)

    upper: Tuple[OptionalBound, ...]
    lower: Tuple[OptionalBound, ...]

    @field_validator("upper", "lower", mode="before")
    @classmethod
    def _normalize(cls, bounds: Any) -> Tuple[OptionalBound, ...]:
        return tuple(_normalize_bound(b) for b in bounds)

    @model_validator(mode="after")
    def _consistent(self) -> "ConstraintEnvelope":
        if len(self.upper) != len(self.lower):
            raise ValueError(f"upper has {len(self.upper)} elements, lower has {len(self.lower)}")
        for u, (hi, lo) in enumerate(zip(self.upper, self.lower)):
            if hi is not None and lo is not None and lo > hi:
                raise ValueError(f"element {u}: lower bound {lo} exceeds upper bound {hi}")
        return self

    @classmethod
    def unconstrained(cls, plan_size: int) -> "ConstraintEnvelope":
        return cls(upper=(None,) * plan_size, lower=(None,) * plan_size)

    @classmethod
    def uniform(cls, plan_size: int, lower: OptionalBound = None, upper: OptionalBound = None) -> "ConstraintEnvelope":
        return cls(upper=(upper,) * plan_size, lower=(lower,) * plan_size)

    @property
    def plan_size(self) -> int:
        return len(self.upper)

    @property
    def is_active(self) -> bool:
        return any(b is not None for b in self.upper) or any(b is not None for b in self.lower)

    def upper_array(self) -> np.ndarray:
        return np.array([np.nan if b is None else b for b in self.upper], dtype=np.float64)

    def lower_array(self) -> np.ndarray:
        return np.array([np.nan if b is None else b for b in self.lower], dtype=np.float64)

    def contains(self, other: "ConstraintEnvelope") -> bool:
        """True when every bound of this envelope is at least as loose as the other's."""
        if other.plan_size != self.plan_size:
            return False
        for mine, theirs in zip(self.upper, other.upper):
            if mine is not None and (theirs is None or theirs > mine):
                return False
        for mine, theirs in zip(self.lower, other.lower):
            if mine is not None and (theirs is None or theirs < mine):
                return False
        return True


class ScalarBound(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: OptionalBound = None
    upper: OptionalBound = None

    @model_validator(mode="before")
    @classmethod
    def _from_pair(cls, data: Any) -> Any:
        if isinstance(data, (tuple, list)):
            lower, upper = data
            data = {"lower": lower, "upper": upper}
        if isinstance(data, dict):
            data = {key: _normalize_bound(value) for key, value in data.items()}
        return data

    @model_validator(mode="after")
    def _ordered(self) -> "ScalarBound":
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        return self

    @property
    def is_active(self) -> bool:
        return self.lower is not None or self.upper is not None

    def holds(self, value: float) -> bool:
        return (self.upper is None or value <= self.upper) and (self.lower is None or value >= self.lower)

    def contains(self, other: "ScalarBound") -> bool:
        if self.upper is not None and (other.upper is None or other.upper > self.upper):
            return False
        if self.lower is not None and (other.lower is None or other.lower < self.lower):
            return False
        return True


class CostEnvelope(BaseModel):
    """Scalar bounds on inefficiency, mean discomfort and unfairness."""
    model_config = ConfigDict(frozen=True)

    inefficiency: ScalarBound = ScalarBound()
    mean_discomfort: ScalarBound = ScalarBound()
    unfairness: ScalarBound = ScalarBound()

    @property
    def is_active(self) -> bool:
        return self.inefficiency.is_active or self.mean_discomfort.is_active or self.unfairness.is_active

    def items(self) -> Iterator[Tuple[str, ScalarBound]]:
        yield "inefficiency", self.inefficiency
        yield "mean_discomfort", self.mean_discomfort
        yield "unfairness", self.unfairness

    def contains(self, other: "CostEnvelope") -> bool:
        return all(mine.contains(theirs) for (_, mine), (_, theirs) in zip(self.items(), other.items()))


@dataclass
class SatisfactionTally:
    satisfied: int = 0
    trials: int = 0

    def __post_init__(self):
        if not 0 <= self.satisfied <= self.trials:
            raise ValueError(f"invalid tally {self.satisfied}/{self.trials}")

    def record(self, satisfied: bool):
        self.trials += 1
        if satisfied:
            self.satisfied += 1


def satisfaction_rate(tally: SatisfactionTally) -> float:
    if tally.trials <= 0:
        raise UndefinedRateError("satisfaction rate is undefined for zero trials")
    return tally.satisfied / tally.trials


def check_level_fraction(fraction: float) -> float:
    """A band width for envelope levels: +inf (unconstrained) or a value in [0, 1]."""
    fraction = float(fraction)
    if fraction == math.inf or 0.0 <= fraction <= 1.0:
        return fraction
    raise ValueError(f"level fraction must be inf or within [0, 1], got {fraction}")


def _check_dimension(length: int, env: ConstraintEnvelope):
    if length != env.plan_size:
        raise DimensionError(f"envelope has {env.plan_size} elements, plan has {length}")


def plan_envelope_mask(rows: np.ndarray, upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Which rows of a (c, m) matrix lie inside the envelope given as NaN-padded arrays."""
    inside_upper = (rows <= upper) | np.isnan(upper)
    inside_lower = (rows >= lower) | np.isnan(lower)
    return np.all(inside_upper & inside_lower, axis=-1)


def satisfies_plan_envelope(global_plan: Sequence[float], env: Optional[ConstraintEnvelope]) -> bool:
    if env is None:
        return True
    g = np.asarray(global_plan, dtype=np.float64)
    _check_dimension(g.shape[0], env)
    return bool(plan_envelope_mask(g, env.upper_array(), env.lower_array()))


def cost_envelope_mask(inefficiency: np.ndarray, mean_discomfort: np.ndarray, unfairness: np.ndarray,
                       cost_env: Optional[CostEnvelope]) -> np.ndarray:
    mask = np.ones(np.shape(inefficiency), dtype=bool)
    if cost_env is None:
        return mask
    for values, bound in ((inefficiency, cost_env.inefficiency),
                          (mean_discomfort, cost_env.mean_discomfort),
                          (unfairness, cost_env.unfairness)):
        if bound.upper is not None:
            mask &= values <= bound.upper
        if bound.lower is not None:
            mask &= values >= bound.lower
    return mask


def satisfies_cost_envelope(costs: CostTriple, cost_env: Optional[CostEnvelope]) -> bool:
    if cost_env is None:
        return True
    return (cost_env.inefficiency.holds(costs.inefficiency)
            and cost_env.mean_discomfort.holds(costs.mean_discomfort)
            and cost_env.unfairness.holds(costs.unfairness))


def expected_satisfaction_rows(values: np.ndarray, upper: np.ndarray, lower: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Expected satisfaction of each plan row, and its worst single-bound margin.

    The expectation is sum(U_u - p_u) + sum(p_u - L_u) over the present bounds.
    The margin is the smallest of those terms (+inf when nothing is bounded).
    """
    upper_slack = upper - values
    lower_slack = values - lower
    expectation = np.nansum(upper_slack, axis=-1) + np.nansum(lower_slack, axis=-1)
    margins = np.minimum(np.where(np.isnan(upper_slack), np.inf, upper_slack).min(axis=-1),
                         np.where(np.isnan(lower_slack), np.inf, lower_slack).min(axis=-1))
    return expectation, margins


def expected_satisfaction(plan: Plan | Sequence[float], env: ConstraintEnvelope) -> float:
    values = np.asarray(plan.values if isinstance(plan, Plan) else plan, dtype=np.float64)
    _check_dimension(values.shape[0], env)
    expectation, _ = expected_satisfaction_rows(values, env.upper_array(), env.lower_array())
    return float(expectation)


def cost_expectation_rows(plan_set: PlanSet, cost_env: CostEnvelope, cost_spec: Optional[CostFunctionSpec],
                          population: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cost-envelope part of the expectation, from what an agent knows before aggregation:
    its plan's own discomfort (D), the plan's own inefficiency (I, RMSE against an even
    share of the target) and the plan's squared score deviation among its options (U).
    """
    k = plan_set.num_plans
    expectation = np.zeros(k)
    margins = np.full(k, np.inf)
    estimates = {"mean_discomfort": plan_set.scores,
                 "unfairness": (plan_set.scores - plan_set.scores.mean()) ** 2}
    if cost_env.inefficiency.is_active:
        spec = cost_spec or CostFunctionSpec()
        share = None if spec.target is None else spec.target_array(plan_set.plan_size) / max(population, 1)
        estimates["inefficiency"] = inefficiency_rows(plan_set.values, spec, share)
    for name, bound in cost_env.items():
        if not bound.is_active:
            continue
        estimate = estimates[name]
        for slack in (None if bound.upper is None else bound.upper - estimate,
                      None if bound.lower is None else estimate - bound.lower):
            if slack is not None:
                expectation = expectation + slack
                margins = np.minimum(margins, slack)
    return expectation, margins


def select_by_expected_satisfaction(plan_set: PlanSet, env: Optional[ConstraintEnvelope],
                                    cost_env: Optional[CostEnvelope] = None,
                                    cost_spec: Optional[CostFunctionSpec] = None,
                                    population: int = 1) -> int:
    """
    Index of the plan with the highest expected satisfaction of all bounds.

    Ties go to the plan with the larger worst-case margin, then to the lowest index.
    """
    if plan_set.num_plans == 1:
        return 0
    expectation = np.zeros(plan_set.num_plans)
    margins = np.full(plan_set.num_plans, np.inf)
    if env is not None and env.is_active:
        _check_dimension(plan_set.plan_size, env)
        expectation, margins = expected_satisfaction_rows(plan_set.values, env.upper_array(), env.lower_array())
    if cost_env is not None and cost_env.is_active:
        cost_expectation, cost_margins = cost_expectation_rows(plan_set, cost_env, cost_spec, population)
        expectation = expectation + cost_expectation
        margins = np.minimum(margins, cost_margins)
    return _argmax_with_margin(expectation, margins)


def _argmax_with_margin(expectation: np.ndarray, margins: np.ndarray) -> int:
    best = np.flatnonzero(expectation == expectation.max())
    if best.size > 1:
        best = best[margins[best] == margins[best].max()]
    return int(best[0])
