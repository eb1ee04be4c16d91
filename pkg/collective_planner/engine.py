"""
Iterative collective learning over a tree overlay.

Each iteration has two sweeps:

* bottom-up: every agent, children first, picks a plan given the new
  aggregate of its subtree and the previous iteration's aggregate of
  everyone else. Agents only ever see aggregates: a plan-sum vector and
  (count, sum, sum of squares) of discomfort scores.
* top-down: starting from the previous iteration's committed selections,
  the tentative choices are adopted branch by branch, root first, and only
  where they strictly lower the system objective without losing constraint
  satisfaction. Everything else rolls back to the previous iteration.

Under active hard constraints the first iteration uses the
expected-satisfaction choice; later iterations filter out plans whose
estimated outcome violates a bound.
"""
import logging
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .constraints import (ConstraintEnvelope, CostEnvelope, cost_envelope_mask, plan_envelope_mask,
                          satisfies_cost_envelope, satisfies_plan_envelope, select_by_expected_satisfaction)
from .errors import ConfigurationError, DimensionError
from .overlay import TreeOverlay
from .plans import (BehaviorWeights, CostFunctionSpec, CostTriple, PlanSet, combine_costs,
                    inefficiency_rows, plan_dimension, system_costs)

engine_logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(default=40, ge=1)
    weights: Union[BehaviorWeights, Tuple[BehaviorWeights, ...]] = BehaviorWeights()
    cost_spec: CostFunctionSpec = CostFunctionSpec()
    plan_env: Optional[ConstraintEnvelope] = None
    cost_env: Optional[CostEnvelope] = None
    seed: int = 0
    arity: int = Field(default=2, ge=1)

    @property
    def constrained(self) -> bool:
        return (self.plan_env is not None and self.plan_env.is_active) or \
               (self.cost_env is not None and self.cost_env.is_active)

    def agent_weights(self, num_agents: int) -> Tuple[BehaviorWeights, ...]:
        if isinstance(self.weights, BehaviorWeights):
            return (self.weights,) * num_agents
        if len(self.weights) != num_agents:
            raise ConfigurationError(f"{len(self.weights)} per-agent weights for {num_agents} agents", key="weights")
        return tuple(self.weights)

    def system_weights(self, num_agents: int) -> BehaviorWeights:
        """Population-mean weights, used to score the whole system."""
        if isinstance(self.weights, BehaviorWeights):
            return self.weights
        per_agent = self.agent_weights(num_agents)
        return BehaviorWeights(alpha=float(np.mean([w.alpha for w in per_agent])),
                               beta=float(np.mean([w.beta for w in per_agent])))


@dataclass(frozen=True, eq=False)
class RunState:
    iteration: int
    selections: Tuple[int, ...]   # plan index per agent id
    global_plan: np.ndarray
    costs: CostTriple
    satisfied: bool
    objective: float
    fallbacks: int = 0            # agents that found no feasible plan in the bottom-up sweep
    rolled_back: bool = False     # the whole iteration reverted to the previous state


class PlanChoice(NamedTuple):
    index: int
    fallback: bool = False


@dataclass(frozen=True)
class SelectionContext:
    """What one agent knows when it chooses during the bottom-up sweep."""
    iteration: int
    subtree_aggregate: np.ndarray          # new plan sum of the agent's children's subtrees
    subtree_stats: np.ndarray              # (count, sum, sum of squares) of their discomfort
    weights: BehaviorWeights
    cost_spec: CostFunctionSpec
    remainder: Optional[np.ndarray] = None  # previous global minus the agent's previous subtree
    remainder_stats: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    plan_env: Optional[ConstraintEnvelope] = None
    cost_env: Optional[CostEnvelope] = None
    plan_upper: Optional[np.ndarray] = None
    plan_lower: Optional[np.ndarray] = None
    population: int = 1

    @property
    def constrained(self) -> bool:
        return (self.plan_env is not None and self.plan_env.is_active) or \
               (self.cost_env is not None and self.cost_env.is_active)

    def known_aggregate(self) -> np.ndarray:
        if self.remainder is None:
            return self.subtree_aggregate
        return self.subtree_aggregate + self.remainder

    def known_stats(self) -> np.ndarray:
        if self.remainder_stats is None:
            return self.subtree_stats
        return self.subtree_stats + self.remainder_stats


def candidate_global(plan_set: PlanSet, plan_index: int, subtree_aggregate: np.ndarray,
                     previous_global: Optional[np.ndarray] = None,
                     previous_own_subtree: Optional[np.ndarray] = None) -> np.ndarray:
    """
    The agent's estimate of the global plan if it picks plan_index: its subtree's
    new aggregate, the plan, and the rest of the system as it was last iteration.
    In the first iteration there is no previous global and only the subtree counts.
    """
    known = np.asarray(subtree_aggregate, dtype=np.float64)
    if previous_global is not None:
        if previous_own_subtree is None:
            raise ConfigurationError("previous_own_subtree is required together with previous_global")
        known = known + (np.asarray(previous_global, dtype=np.float64) - np.asarray(previous_own_subtree, dtype=np.float64))
    if known.shape[0] != plan_set.plan_size:
        raise DimensionError(f"aggregate has {known.shape[0]} elements, plans have {plan_set.plan_size}")
    return known + plan_set.values[plan_index]


def _estimated_costs(rows: np.ndarray, stats: np.ndarray, cost_spec: CostFunctionSpec,
                     target: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inefficiency of candidate globals and discomfort mean/variance from (count, sum, sumsq) stats."""
    inefficiency = inefficiency_rows(rows, cost_spec, target)
    count = np.maximum(stats[..., 0], 1.0)
    mean = stats[..., 1] / count
    variance = np.maximum(stats[..., 2] / count - mean ** 2, 0.0)
    return inefficiency, mean, variance


def select_plan(plan_set: PlanSet, context: SelectionContext) -> PlanChoice:
    if plan_set.num_plans == 1:
        return PlanChoice(0)

    if context.iteration == 1 and context.constrained:
        return PlanChoice(select_by_expected_satisfaction(
            plan_set, context.plan_env, context.cost_env, context.cost_spec, context.population))

    rows = context.known_aggregate() + plan_set.values
    known = context.known_stats()
    stats = np.column_stack((np.full(plan_set.num_plans, known[0] + 1.0),
                             known[1] + plan_set.scores,
                             known[2] + plan_set.scores ** 2))
    inefficiency, discomfort, unfairness = _estimated_costs(rows, stats, context.cost_spec, context.target)
    weights = context.weights
    objective = weights.inefficiency_weight * inefficiency + weights.alpha * unfairness + weights.beta * discomfort

    if context.iteration > 1 and context.constrained:
        feasible = cost_envelope_mask(inefficiency, discomfort, unfairness, context.cost_env)
        if context.plan_upper is not None:
            feasible &= plan_envelope_mask(rows, context.plan_upper, context.plan_lower)
        if not feasible.any():
            return PlanChoice(select_by_expected_satisfaction(
                plan_set, context.plan_env, context.cost_env, context.cost_spec, context.population), True)
        objective = np.where(feasible, objective, np.inf)

    return PlanChoice(int(np.argmin(objective)))


class CollectiveLearner:
    """Runs repetitions of the learning protocol for one overlay and configuration."""

    def __init__(self, plan_sets: Sequence[PlanSet], overlay: TreeOverlay, config: RunConfig,
                 logger: Optional[logging.Logger] = None):
        self.plan_sets = list(plan_sets)
        self.num_agents = len(self.plan_sets)
        self.plan_size = plan_dimension(self.plan_sets)
        if overlay.num_agents != self.num_agents:
            raise ConfigurationError(f"overlay holds {overlay.num_agents} agents, plan sets hold {self.num_agents}")
        self.overlay = overlay
        self.config = config
        self.logger = logger or engine_logger

        self._target = config.cost_spec.target_array(self.plan_size)
        self._plan_upper = self._plan_lower = None
        if config.plan_env is not None:
            if config.plan_env.plan_size != self.plan_size:
                raise DimensionError(f"global constraint envelope has {config.plan_env.plan_size} elements, plans have {self.plan_size}")
            if config.plan_env.is_active:
                self._plan_upper = config.plan_env.upper_array()
                self._plan_lower = config.plan_env.lower_array()
        self._constrained = config.constrained
        self._agent_weights = config.agent_weights(self.num_agents)
        self._system_weights = config.system_weights(self.num_agents)

    def _context(self, agent: int, iteration: int, subtree_sum: np.ndarray, subtree_stats: np.ndarray,
                 remainder: Optional[np.ndarray], remainder_stats: Optional[np.ndarray]) -> SelectionContext:
        return SelectionContext(
            iteration=iteration, subtree_aggregate=subtree_sum, subtree_stats=subtree_stats,
            weights=self._agent_weights[agent], cost_spec=self.config.cost_spec,
            remainder=remainder, remainder_stats=remainder_stats, target=self._target,
            plan_env=self.config.plan_env, cost_env=self.config.cost_env,
            plan_upper=self._plan_upper, plan_lower=self._plan_lower, population=self.num_agents)

    def _plan_stats(self, agent: int, plan_index: int) -> np.ndarray:
        score = self.plan_sets[agent].scores[plan_index]
        return np.array([1.0, score, score * score])

    def _subtree_totals(self, selections: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        sums = np.zeros((self.num_agents, self.plan_size))
        stats = np.zeros((self.num_agents, 3))
        for agent in self.overlay.post_order:
            sums[agent] = self.plan_sets[agent].values[selections[agent]]
            stats[agent] = self._plan_stats(agent, selections[agent])
            for child in self.overlay.children[agent]:
                sums[agent] += sums[child]
                stats[agent] += stats[child]
        return sums, stats

    def _exact_state(self, iteration: int, selections: Sequence[int], fallbacks: int) -> RunState:
        global_plan, costs = system_costs(self.plan_sets, selections, self.config.cost_spec)
        satisfied = satisfies_plan_envelope(global_plan, self.config.plan_env) and \
                    satisfies_cost_envelope(costs, self.config.cost_env)
        return RunState(iteration=iteration, selections=tuple(int(s) for s in selections),
                        global_plan=global_plan, costs=costs, satisfied=satisfied,
                        objective=combine_costs(costs, self._system_weights), fallbacks=fallbacks)

    def _estimate(self, global_plan: np.ndarray, stats: np.ndarray) -> Tuple[float, bool]:
        inefficiency, discomfort, unfairness = _estimated_costs(global_plan, stats, self.config.cost_spec, self._target)
        w = self._system_weights
        objective = float(w.inefficiency_weight * inefficiency + w.alpha * unfairness + w.beta * discomfort)
        if not self._constrained:
            return objective, True
        satisfied = bool(cost_envelope_mask(inefficiency, discomfort, unfairness, self.config.cost_env))
        if self._plan_upper is not None:
            satisfied = satisfied and bool(plan_envelope_mask(global_plan, self._plan_upper, self._plan_lower))
        return objective, satisfied

    def run_iteration(self, state: Optional[RunState]) -> RunState:
        """One bottom-up and top-down sweep. Pass None to run the cold-start iteration."""
        iteration = 1 if state is None else state.iteration + 1
        n, m = self.num_agents, self.plan_size

        previous_sums = previous_stats = previous_total = None
        if state is not None:
            previous_sums, previous_stats = self._subtree_totals(state.selections)
            previous_total = previous_stats[self.overlay.root]

        tentative = [0] * n
        tentative_sums = np.zeros((n, m))
        tentative_stats = np.zeros((n, 3))
        changed = np.zeros(n, dtype=bool)  # any selection in the subtree differs from last iteration
        fallbacks = 0

        for agent in self.overlay.post_order:
            children = self.overlay.children[agent]
            subtree_sum = np.zeros(m)
            subtree_stats = np.zeros(3)
            for child in children:
                subtree_sum += tentative_sums[child]
                subtree_stats += tentative_stats[child]

            remainder = remainder_stats = None
            if state is not None:
                remainder = state.global_plan - previous_sums[agent]
                remainder_stats = previous_total - previous_stats[agent]

            choice = select_plan(self.plan_sets[agent],
                                 self._context(agent, iteration, subtree_sum, subtree_stats, remainder, remainder_stats))
            tentative[agent] = choice.index
            fallbacks += int(choice.fallback)
            tentative_sums[agent] = subtree_sum + self.plan_sets[agent].values[choice.index]
            tentative_stats[agent] = subtree_stats + self._plan_stats(agent, choice.index)
            changed[agent] = (state is not None and state.selections[agent] != choice.index) or \
                             any(changed[child] for child in children)

        if fallbacks:
            self.logger.debug(f"Iteration {iteration}: {fallbacks} agent(s) found no feasible plan and fell back to expected satisfaction.")

        if state is None:
            return self._exact_state(iteration, tentative, fallbacks)

        committed = list(state.selections)
        current_global = state.global_plan.copy()
        current_stats = previous_total.copy()
        current_objective, current_satisfied = state.objective, state.satisfied

        def accept(global_plan: np.ndarray, stats: np.ndarray) -> bool:
            nonlocal current_global, current_stats, current_objective, current_satisfied
            objective, satisfied = self._estimate(global_plan, stats)
            if objective < current_objective and (satisfied or not current_satisfied):
                current_global, current_stats = global_plan, stats
                current_objective, current_satisfied = objective, satisfied
                return True
            return False

        stack = [self.overlay.root]
        while stack:
            agent = stack.pop()
            if not changed[agent]:
                continue
            if accept(current_global + (tentative_sums[agent] - previous_sums[agent]),
                      current_stats + (tentative_stats[agent] - previous_stats[agent])):
                for member in self.overlay.subtree(agent):
                    committed[member] = tentative[member]
                continue
            old, new = state.selections[agent], tentative[agent]
            if old != new:
                values = self.plan_sets[agent].values
                if accept(current_global + (values[new] - values[old]),
                          current_stats + (self._plan_stats(agent, new) - self._plan_stats(agent, old))):
                    committed[agent] = new
            stack.extend(self.overlay.children[agent])

        candidate = self._exact_state(iteration, committed, fallbacks)
        if candidate.objective > state.objective or (state.satisfied and not candidate.satisfied):
            self.logger.debug(f"Iteration {iteration}: exact check rejected the sweep, rolling back to iteration {state.iteration}.")
            return replace(state, iteration=iteration, fallbacks=fallbacks, rolled_back=True)
        return candidate

    def run_repetition(self) -> List[RunState]:
        """Runs the configured number of iterations and returns every state."""
        states: List[RunState] = []
        state: Optional[RunState] = None
        for _ in range(self.config.iterations):
            state = self.run_iteration(state)
            states.append(state)
            self.logger.debug(f"Iteration {state.iteration}: objective={state.objective:.6g} "
                              f"satisfied={state.satisfied} fallbacks={state.fallbacks}")
        return states
