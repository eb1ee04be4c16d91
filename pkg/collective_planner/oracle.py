"""
Exhaustive enumeration of every selection combination, for validating the
engine on instances small enough to enumerate.

Combinations are numbered in row-major order over the agents' plan indices
(agent 0 most significant) and evaluated in vectorized chunks. Objectives
close to a chunk's best are re-evaluated with the scalar cost functions so
the reported optimum is exactly what the engine would compute for the same
selections.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import settings
from .constraints import (ConstraintEnvelope, CostEnvelope, plan_envelope_mask,
                          satisfies_cost_envelope, satisfies_plan_envelope)
from .errors import DimensionError, OracleCapacityError
from .plans import BehaviorWeights, CostFunctionSpec, PlanSet, combine_costs, inefficiency_rows, plan_dimension, system_costs

oracle_logger = logging.getLogger(__name__)

_RELATIVE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class OracleResult:
    optimum: float
    selections: Tuple[int, ...]
    global_plan: np.ndarray
    feasible_count: int
    combinations: int
    feasible_optimum: Optional[float] = None
    feasible_selections: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class _ChunkOutcome:
    best: Tuple[float, int]
    feasible_best: Optional[Tuple[float, int]]
    feasible_count: int


class _Enumeration:
    """Evaluates ranges of combination numbers for one instance."""

    def __init__(self, plan_sets: Sequence[PlanSet], weights: BehaviorWeights, cost_spec: CostFunctionSpec,
                 plan_env: Optional[ConstraintEnvelope], cost_env: Optional[CostEnvelope]):
        self.plan_sets = plan_sets
        self.shape = tuple(ps.num_plans for ps in plan_sets)
        self.weights = weights
        self.cost_spec = cost_spec
        self.target = cost_spec.target_array(plan_sets[0].plan_size)
        self.plan_env = plan_env if plan_env is not None and plan_env.is_active else None
        self.cost_env = cost_env if cost_env is not None and cost_env.is_active else None
        if self.plan_env is not None and self.plan_env.plan_size != plan_sets[0].plan_size:
            raise DimensionError(f"global constraint envelope has {self.plan_env.plan_size} elements, plans have {plan_sets[0].plan_size}")

    def selections(self, number: int) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.unravel_index(number, self.shape))

    def exact(self, number: int) -> Tuple[float, bool]:
        selections = self.selections(number)
        global_plan, costs = system_costs(self.plan_sets, selections, self.cost_spec)
        feasible = satisfies_plan_envelope(global_plan, self.plan_env) and satisfies_cost_envelope(costs, self.cost_env)
        return combine_costs(costs, self.weights), feasible

    def _feasibility(self, rows, inefficiency, discomfort, unfairness, slack: float) -> np.ndarray:
        """Vectorized envelope check with every bound loosened by slack (tightened when negative)."""
        mask = np.ones(rows.shape[0], dtype=bool)
        if self.plan_env is not None:
            mask &= plan_envelope_mask(rows, self.plan_env.upper_array() + slack, self.plan_env.lower_array() - slack)
        if self.cost_env is not None:
            for values, bound in ((inefficiency, self.cost_env.inefficiency),
                                  (discomfort, self.cost_env.mean_discomfort),
                                  (unfairness, self.cost_env.unfairness)):
                if bound.upper is not None:
                    mask &= values <= bound.upper + slack
                if bound.lower is not None:
                    mask &= values >= bound.lower - slack
        return mask

    def evaluate(self, start: int, stop: int) -> _ChunkOutcome:
        numbers = np.arange(start, stop)
        digits = np.unravel_index(numbers, self.shape)
        rows = np.zeros((numbers.shape[0], self.plan_sets[0].plan_size))
        for plan_set, column in zip(self.plan_sets, digits):
            rows += plan_set.values[column]
        scores = np.column_stack([ps.scores[column] for ps, column in zip(self.plan_sets, digits)])
        inefficiency = inefficiency_rows(rows, self.cost_spec, self.target)
        discomfort = scores.mean(axis=1)
        unfairness = scores.var(axis=1)
        objective = (self.weights.inefficiency_weight * inefficiency
                     + self.weights.alpha * unfairness + self.weights.beta * discomfort)

        best = self._best_exact(numbers, objective, np.ones(numbers.shape[0], dtype=bool))

        if self.plan_env is None and self.cost_env is None:
            return _ChunkOutcome(best, best, int(numbers.shape[0]))

        scale = max(1.0, float(np.abs(rows).max(initial=0.0)), float(np.abs(objective).max(initial=0.0)))
        slack = _RELATIVE_TOLERANCE * scale
        surely = self._feasibility(rows, inefficiency, discomfort, unfairness, -slack)
        maybe = self._feasibility(rows, inefficiency, discomfort, unfairness, slack)
        feasible = surely.copy()
        for position in np.flatnonzero(maybe & ~surely):
            feasible[position] = self.exact(int(numbers[position]))[1]
        feasible_best = self._best_exact(numbers, objective, feasible) if feasible.any() else None
        return _ChunkOutcome(best, feasible_best, int(feasible.sum()))

    def _best_exact(self, numbers: np.ndarray, objective: np.ndarray, allowed: np.ndarray) -> Tuple[float, int]:
        candidates = np.where(allowed, objective, np.inf)
        lowest = float(candidates.min())
        window = lowest + _RELATIVE_TOLERANCE * max(1.0, abs(lowest))
        best: Optional[Tuple[float, int]] = None
        for position in np.flatnonzero(candidates <= window):
            number = int(numbers[position])
            value = self.exact(number)[0]
            if best is None or (value, number) < best:
                best = (value, number)
        return best


def combination_count(plan_sets: Sequence[PlanSet]) -> int:
    return math.prod(ps.num_plans for ps in plan_sets)


def brute_force_oracle(plan_sets: Sequence[PlanSet], weights: BehaviorWeights, cost_spec: CostFunctionSpec,
                       plan_env: Optional[ConstraintEnvelope] = None, cost_env: Optional[CostEnvelope] = None,
                       max_combinations: Optional[int] = None, max_workers: Optional[int] = None,
                       chunk_size: Optional[int] = None) -> OracleResult:
    """
    Enumerates all selections and returns the optimum of the weighted objective,
    the number of combinations satisfying both envelopes and the best of those.
    """
    plan_dimension(plan_sets)
    cap = settings.ORACLE_MAX_COMBINATIONS if max_combinations is None else max_combinations
    total = combination_count(plan_sets)
    if total > cap:
        raise OracleCapacityError(total, cap)

    enumeration = _Enumeration(plan_sets, weights, cost_spec, plan_env, cost_env)
    chunk = max(1, chunk_size or settings.ORACLE_CHUNK_SIZE)
    bounds: List[Tuple[int, int]] = [(start, min(start + chunk, total)) for start in range(0, total, chunk)]
    oracle_logger.debug(f"Enumerating {total} combinations in {len(bounds)} chunk(s).")

    if len(bounds) == 1:
        outcomes = [enumeration.evaluate(*bounds[0])]
    else:
        with ThreadPoolExecutor(max_workers=max_workers or settings.MAX_WORKERS) as executor:
            outcomes = list(executor.map(lambda b: enumeration.evaluate(*b), bounds))

    optimum, number = min(outcome.best for outcome in outcomes)
    feasible = [outcome.feasible_best for outcome in outcomes if outcome.feasible_best is not None]
    feasible_count = sum(outcome.feasible_count for outcome in outcomes)

    selections = enumeration.selections(number)
    global_plan, _ = system_costs(plan_sets, selections, cost_spec)
    feasible_optimum, feasible_selections = None, None
    if feasible:
        feasible_optimum, feasible_number = min(feasible)
        feasible_selections = enumeration.selections(feasible_number)
    oracle_logger.info(f"Oracle: optimum {optimum:.6g} over {total} combinations, {feasible_count} feasible.")
    return OracleResult(optimum=optimum, selections=selections, global_plan=global_plan,
                        feasible_count=feasible_count, combinations=total,
                        feasible_optimum=feasible_optimum, feasible_selections=feasible_selections)
