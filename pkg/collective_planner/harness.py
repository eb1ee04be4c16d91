"""
Experiment orchestration: seeded repetitions over freshly positioned trees,
satisfaction-rate measurement, the behavioral-shift sweep over beta and the
envelope-level sweep.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import psutil
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import SimulationEventType, event_publisher
from .config import settings
from .constraints import (ConstraintEnvelope, CostEnvelope, SatisfactionTally, ScalarBound,
                          check_level_fraction, satisfaction_rate)
from .engine import CollectiveLearner, RunConfig, RunState
from .errors import ConfigurationError
from .event_system import EventPublisher
from .overlay import build_tree
from .plans import BehaviorWeights, CostTriple, PlanSet
from .results import ResultRow

harness_logger = logging.getLogger(__name__)


class BetaSweep(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: float = Field(default=0.0, ge=0.0, le=1.0)
    end: float = Field(default=1.0, ge=0.0, le=1.0)
    step: float = Field(default=0.025, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "BetaSweep":
        if self.end < self.start:
            raise ValueError(f"sweep end {self.end} is below its start {self.start}")
        return self

    def grid(self) -> List[float]:
        # Rounded so 0.025 steps land on 0.475, not 0.47500000000000003.
        count = int(math.floor((self.end - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(count)]


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    repetitions: int = Field(default=200, ge=1)
    run_config: RunConfig = RunConfig()
    levels: Optional[Tuple[ConstraintEnvelope, ...]] = None
    level_fractions: Tuple[float, ...] = Field(default_factory=lambda: tuple(settings.LEVEL_FRACTIONS))
    beta_sweep: Optional[BetaSweep] = None
    base_seed: int = 0
    shift_bound_margin: float = 0.0

    @field_validator("level_fractions")
    @classmethod
    def _fractions_in_range(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        return tuple(check_level_fraction(f) for f in value)

    def with_run_config(self, **changes) -> "ExperimentSpec":
        return self.model_copy(update={"run_config": self.run_config.model_copy(update=changes)})


@dataclass(frozen=True)
class ShiftPoint:
    beta: float
    soft_inefficiency: float
    soft_discomfort: float
    hard_inefficiency: float
    hard_discomfort: float
    matched_beta: float
    shift: float


@dataclass(frozen=True, eq=False)
class LevelOutcome:
    level: int
    fraction: Optional[float]   # None for an explicitly supplied envelope
    envelope: ConstraintEnvelope
    satisfaction_rate: float
    mean_inefficiency: float
    median_global_plan: np.ndarray   # element-wise median of the final global plans


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """
    Outcome of one experiment. Sweeps return a report without states of its
    own whose children are the reports of the individual sweep points.
    """
    scope: str
    final_states: Tuple[RunState, ...]
    rows: Tuple[ResultRow, ...]
    tally: SatisfactionTally
    children: Tuple["ExperimentReport", ...] = ()
    shift_curve: Optional[Tuple[ShiftPoint, ...]] = None
    level_outcomes: Optional[Tuple[LevelOutcome, ...]] = None

    def walk(self) -> Iterator["ExperimentReport"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def all_rows(self) -> Iterator[ResultRow]:
        for part in self.walk():
            yield from part.rows

    @property
    def satisfaction_rate(self) -> float:
        return satisfaction_rate(self.tally)

    @property
    def best_state(self) -> Optional[RunState]:
        """Lowest final objective over this report and its children; earliest wins ties."""
        best: Optional[RunState] = None
        for part in self.walk():
            for state in part.final_states:
                if best is None or state.objective < best.objective:
                    best = state
        return best

    @property
    def best_objective(self) -> float:
        best = self.best_state
        return math.nan if best is None else best.objective

    @property
    def mean_costs(self) -> CostTriple:
        if not self.final_states:
            raise ValueError(f"report '{self.scope}' has no final states")
        return CostTriple(float(np.mean([s.costs.inefficiency for s in self.final_states])),
                          float(np.mean([s.costs.mean_discomfort for s in self.final_states])),
                          float(np.mean([s.costs.unfairness for s in self.final_states])))

    @property
    def mean_shift(self) -> Optional[float]:
        if not self.shift_curve:
            return None
        return float(np.mean([point.shift for point in self.shift_curve]))


def derive_level_envelopes(median_plan: Sequence[float], fractions: Sequence[float]) -> List[ConstraintEnvelope]:
    """
    Uniform bands around the median global plan: fraction f keeps the values
    between its (0.5 - f/2) and (0.5 + f/2) quantiles. An infinite fraction
    leaves the plan unconstrained.
    """
    values = np.asarray(median_plan, dtype=np.float64)
    envelopes = []
    for fraction in fractions:
        if fraction == math.inf:
            envelopes.append(ConstraintEnvelope.unconstrained(values.shape[0]))
            continue
        try:
            fraction = check_level_fraction(fraction)
        except ValueError as e:
            raise ConfigurationError(str(e), key="levelFractions") from e
        lower = float(np.quantile(values, 0.5 - fraction / 2))
        upper = float(np.quantile(values, 0.5 + fraction / 2))
        envelopes.append(ConstraintEnvelope.uniform(values.shape[0], lower=lower, upper=upper))
    return envelopes


def _median_global_plan(report: ExperimentReport) -> np.ndarray:
    return np.median(np.vstack([state.global_plan for state in report.final_states]), axis=0)


def _nearest_beta(target: float, own_beta: float, soft_curve: Sequence[Tuple[float, float]]) -> float:
    """Grid beta whose soft inefficiency is nearest to target; own beta first, then the smaller beta."""
    distances = [abs(inefficiency - target) for _, inefficiency in soft_curve]
    nearest = min(distances)
    tied = [beta for (beta, _), distance in zip(soft_curve, distances) if distance == nearest]
    return own_beta if own_beta in tied else min(tied)


class ExperimentRunner:
    def __init__(self, plan_sets: Sequence[PlanSet], logger: Optional[logging.Logger] = None,
                 publisher: Optional[EventPublisher] = None, max_workers: Optional[int] = None):
        self.plan_sets = list(plan_sets)
        self.logger = logger or harness_logger
        self.publisher = publisher or event_publisher
        self.max_workers = max_workers or settings.MAX_WORKERS

    def _repetition(self, spec: ExperimentSpec, repetition: int) -> List[RunState]:
        seed = spec.base_seed + repetition
        config = spec.run_config.model_copy(update={"seed": seed})
        overlay = build_tree(len(self.plan_sets), seed, config.arity)
        states = CollectiveLearner(self.plan_sets, overlay, config, self.logger).run_repetition()
        self.publisher.publish(SimulationEventType.REPETITION_COMPLETED, repetition=repetition, state=states[-1])
        return states

    def run_experiment(self, spec: ExperimentSpec, scope: str = "run") -> ExperimentReport:
        """Runs spec.repetitions repetitions; repetition j positions the tree with seed base_seed + j."""
        started = time.perf_counter()
        self.publisher.publish(SimulationEventType.EXPERIMENT_STARTED, total_repetitions=spec.repetitions)

        if self.max_workers > 1 and spec.repetitions > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                trajectories = list(executor.map(lambda j: self._repetition(spec, j), range(spec.repetitions)))
        else:
            trajectories = [self._repetition(spec, j) for j in range(spec.repetitions)]

        tally = SatisfactionTally()
        rows: List[ResultRow] = []
        for repetition, states in enumerate(trajectories):
            tally.record(states[-1].satisfied)
            rows.extend(ResultRow.from_state(scope, repetition, state) for state in states)

        report = ExperimentReport(scope=scope, final_states=tuple(states[-1] for states in trajectories),
                                  rows=tuple(rows), tally=tally)
        rss_mb = psutil.Process().memory_info().rss / (1024 * 1024)
        self.logger.info(f"[{scope}] {spec.repetitions} repetition(s) in {time.perf_counter() - started:.2f}s, "
                         f"satisfied {tally.satisfied}/{tally.trials}, best objective {report.best_objective:.6g}, "
                         f"RSS {rss_mb:.0f} MB")
        self.publisher.publish(SimulationEventType.EXPERIMENT_COMPLETED, report=report)
        return report

    def _shift_pair(self, spec: ExperimentSpec, alpha: float, beta: float) -> Tuple[ExperimentReport, ExperimentReport]:
        """Soft run at (alpha, beta), then the hard run bounding mean discomfort by the soft result."""
        weights = BehaviorWeights(alpha=alpha, beta=beta)
        soft = self.run_experiment(spec.with_run_config(weights=weights, plan_env=None, cost_env=None),
                                   scope=f"beta:{beta:g}:soft")
        bound = ScalarBound(upper=soft.mean_costs.mean_discomfort + spec.shift_bound_margin)
        hard = self.run_experiment(spec.with_run_config(weights=weights, plan_env=None,
                                                        cost_env=CostEnvelope(mean_discomfort=bound)),
                                   scope=f"beta:{beta:g}:hard")
        return soft, hard

    def behavioral_shift(self, spec: ExperimentSpec) -> ExperimentReport:
        """
        For every beta on the grid: run soft, bound mean discomfort by the soft
        result, run hard, and find the beta whose soft inefficiency is nearest
        to the hard run's. The shift is beta minus that beta.
        """
        sweep = spec.beta_sweep or BetaSweep()
        alpha = spec.run_config.system_weights(len(self.plan_sets)).alpha
        betas = []
        for beta in sweep.grid():
            if alpha + beta > 1.0 + 1e-12:
                self.logger.warning(f"Skipping beta={beta:g}: alpha + beta exceeds 1.")
                continue
            betas.append(beta)

        # Concurrent points run their repetitions sequentially.
        if self.max_workers > 1 and len(betas) > 1:
            point_runner = ExperimentRunner(self.plan_sets, self.logger, self.publisher, max_workers=1)
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                pairs = list(executor.map(lambda b: point_runner._shift_pair(spec, alpha, b), betas))
        else:
            pairs = [self._shift_pair(spec, alpha, beta) for beta in betas]

        children: List[ExperimentReport] = [report for pair in pairs for report in pair]
        measured = [(beta, soft, hard) for beta, (soft, hard) in zip(betas, pairs)]

        soft_curve = [(beta, soft.mean_costs.inefficiency) for beta, soft, _ in measured]
        points = []
        for beta, soft, hard in measured:
            matched = _nearest_beta(hard.mean_costs.inefficiency, beta, soft_curve)
            points.append(ShiftPoint(beta=beta, soft_inefficiency=soft.mean_costs.inefficiency,
                                     soft_discomfort=soft.mean_costs.mean_discomfort,
                                     hard_inefficiency=hard.mean_costs.inefficiency,
                                     hard_discomfort=hard.mean_costs.mean_discomfort,
                                     matched_beta=matched, shift=beta - matched))
            self.publisher.publish(SimulationEventType.SWEEP_POINT_COMPLETED, label=f"beta={beta:g}", value=beta - matched)

        report = ExperimentReport(scope="behavioral-shift", final_states=(), rows=(), tally=SatisfactionTally(),
                                  children=tuple(children), shift_curve=tuple(points))
        if points:
            self.logger.info(f"Mean behavioral shift over {len(points)} beta point(s): {report.mean_shift:.4f}")
        return report

    def envelope_level_sweep(self, spec: ExperimentSpec) -> ExperimentReport:
        """Satisfaction rate and mean final inefficiency per envelope level, on paired seeds."""
        children: List[ExperimentReport] = []
        if spec.levels is not None:
            envelopes: List[ConstraintEnvelope] = list(spec.levels)
            fractions: List[Optional[float]] = [None] * len(envelopes)
        else:
            reference = self.run_experiment(spec.with_run_config(plan_env=None, cost_env=None), scope="reference")
            children.append(reference)
            median_plan = _median_global_plan(reference)
            envelopes = derive_level_envelopes(median_plan, spec.level_fractions)
            fractions = list(spec.level_fractions)

        outcomes = []
        for level, (envelope, fraction) in enumerate(zip(envelopes, fractions)):
            report = self.run_experiment(spec.with_run_config(plan_env=envelope), scope=f"level:{level}")
            children.append(report)
            outcomes.append(LevelOutcome(level=level, fraction=fraction, envelope=envelope,
                                         satisfaction_rate=report.satisfaction_rate,
                                         mean_inefficiency=report.mean_costs.inefficiency,
                                         median_global_plan=_median_global_plan(report)))
            self.publisher.publish(SimulationEventType.SWEEP_POINT_COMPLETED, label=f"level {level}",
                                   value=report.satisfaction_rate)

        return ExperimentReport(scope="levels", final_states=(), rows=(), tally=SatisfactionTally(),
                                children=tuple(children), level_outcomes=tuple(outcomes))
