import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch
import logging
import math
import time

import numpy as np
import psutil
import pytest

import sys
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from collective_planner.constraints import ConstraintEnvelope, SatisfactionTally
from collective_planner.datasets import ScenarioKind, ScenarioSpec, generate_scenario
from collective_planner.engine import RunConfig
from collective_planner.errors import ConfigurationError, UndefinedRateError
from collective_planner.event_system import SimulationEventType
from collective_planner.harness import (BetaSweep, ExperimentReport, ExperimentRunner, ExperimentSpec,
                                        _nearest_beta, derive_level_envelopes)
from collective_planner.overlay import build_tree
from collective_planner.plans import BehaviorWeights, PlanSet


def three_agent_plan_sets():
    return [PlanSet(0, [[3, 5], [2, 7]], [0, 1]),
            PlanSet(1, [[1, 3], [5, 2]], [0, 1]),
            PlanSet(2, [[6, 2], [3, 5]], [0, 1])]


def small_energy(num_agents=20, num_plans=4, plan_size=12, seed=1):
    return generate_scenario(ScenarioSpec(kind=ScenarioKind.ENERGY_LIKE, num_agents=num_agents,
                                          num_plans=num_plans, plan_size=plan_size, seed=seed))


def relative_bands(median_plan, fractions):
    """Envelopes holding every element within +-f of the median plan, one per fraction."""
    median_plan = np.asarray(median_plan)
    spread = np.abs(median_plan)
    return tuple(ConstraintEnvelope(upper=median_plan + f * spread, lower=median_plan - f * spread) for f in fractions)


class HarnessTestCase(unittest.TestCase):

    def setUp(self):
        self.logger = MagicMock(spec=logging.Logger)
        self.publisher = MagicMock()

    def runner(self, plan_sets, max_workers=1) -> ExperimentRunner:
        return ExperimentRunner(plan_sets, logger=self.logger, publisher=self.publisher, max_workers=max_workers)


class TestBetaSweep(unittest.TestCase):

    def test_default_grid(self):
        grid = BetaSweep().grid()
        self.assertEqual(len(grid), 41)
        self.assertEqual(grid[0], 0.0)
        self.assertEqual(grid[19], 0.475)
        self.assertEqual(grid[-1], 1.0)

    def test_reversed_sweep_rejected(self):
        with self.assertRaises(ValueError):
            BetaSweep(start=0.5, end=0.2)


class TestHelpers(unittest.TestCase):

    def test_level_envelopes_are_nested(self):
        median_plan = np.arange(1.0, 21.0)
        levels = derive_level_envelopes(median_plan, (math.inf, 1.0, 0.5, 0.0))
        self.assertFalse(levels[0].is_active)
        self.assertEqual(levels[1].upper[0], 20.0)
        self.assertEqual(levels[1].lower[0], 1.0)
        self.assertEqual(levels[3].upper[0], levels[3].lower[0])
        for loose, tight in zip(levels, levels[1:]):
            self.assertTrue(loose.contains(tight))

    def test_invalid_level_fractions_rejected(self):
        with self.assertRaises(ConfigurationError) as ctx:
            derive_level_envelopes(np.arange(5.0), (float("nan"),))
        self.assertEqual(ctx.exception.key, "levelFractions")
        with self.assertRaises(ConfigurationError):
            derive_level_envelopes(np.arange(5.0), (-0.25,))
        with self.assertRaises(ValueError):
            ExperimentSpec(level_fractions=(math.inf, 2.0))

    def test_nearest_beta_prefers_own_then_smallest(self):
        curve = [(0.0, 5.0), (0.25, 4.0), (0.5, 4.0), (0.75, 3.0)]
        self.assertEqual(_nearest_beta(4.0, 0.5, curve), 0.5)
        self.assertEqual(_nearest_beta(4.0, 0.0, curve), 0.25)
        self.assertEqual(_nearest_beta(2.0, 0.0, curve), 0.75)

    def test_empty_report(self):
        report = ExperimentReport(scope="empty", final_states=(), rows=(), tally=SatisfactionTally())
        self.assertTrue(math.isnan(report.best_objective))
        self.assertIsNone(report.mean_shift)
        with self.assertRaises(UndefinedRateError):
            _ = report.satisfaction_rate


class TestRunExperiment(HarnessTestCase):

    def test_single_soft_repetition(self):
        spec = ExperimentSpec(repetitions=1, run_config=RunConfig(iterations=3))
        report = self.runner(three_agent_plan_sets()).run_experiment(spec)
        self.assertEqual((report.tally.satisfied, report.tally.trials), (1, 1))
        self.assertEqual(report.satisfaction_rate, 1.0)
        self.assertEqual(len(report.rows), 3)
        self.assertEqual({row.scope for row in report.rows}, {"run"})

    def test_unsatisfiable_envelope_never_counts(self):
        env = ConstraintEnvelope(upper=(9.0, 9.0), lower=(None, None))
        spec = ExperimentSpec(repetitions=6, run_config=RunConfig(iterations=4, plan_env=env))
        report = self.runner(three_agent_plan_sets()).run_experiment(spec)
        self.assertEqual((report.tally.satisfied, report.tally.trials), (0, 6))

    def test_same_seed_same_rows(self):
        scenario = small_energy()
        spec = ExperimentSpec(repetitions=4, run_config=RunConfig(iterations=4), base_seed=9)
        first = self.runner(scenario.plan_sets).run_experiment(spec)
        second = self.runner(scenario.plan_sets, max_workers=3).run_experiment(spec)
        self.assertEqual(first.rows, second.rows)

    def test_repetitions_use_consecutive_seeds(self):
        scenario = small_energy()
        spec = ExperimentSpec(repetitions=3, run_config=RunConfig(iterations=2), base_seed=40)
        with patch('collective_planner.harness.build_tree', wraps=build_tree) as mock_build:
            self.runner(scenario.plan_sets).run_experiment(spec)
        self.assertEqual(sorted(c.args[1] for c in mock_build.call_args_list), [40, 41, 42])

    def test_events_published(self):
        spec = ExperimentSpec(repetitions=2, run_config=RunConfig(iterations=1))
        report = self.runner(three_agent_plan_sets()).run_experiment(spec)
        event_types = [c.args[0] for c in self.publisher.publish.call_args_list]
        self.assertEqual(event_types[0], SimulationEventType.EXPERIMENT_STARTED)
        self.assertEqual(event_types.count(SimulationEventType.REPETITION_COMPLETED), 2)
        self.assertEqual(event_types[-1], SimulationEventType.EXPERIMENT_COMPLETED)
        self.publisher.publish.assert_any_call(SimulationEventType.EXPERIMENT_STARTED, total_repetitions=2)
        self.publisher.publish.assert_any_call(SimulationEventType.EXPERIMENT_COMPLETED, report=report)


class TestEnvelopeLevelSweep(HarnessTestCase):

    def test_derived_levels_span_unconstrained_to_pinned(self):
        scenario = small_energy()
        spec = ExperimentSpec(repetitions=6, run_config=RunConfig(iterations=5), level_fractions=(math.inf, 0.5, 0.0))
        report = self.runner(scenario.plan_sets).envelope_level_sweep(spec)

        rates = [outcome.satisfaction_rate for outcome in report.level_outcomes]
        self.assertEqual(rates[0], 1.0)
        self.assertEqual(rates[2], 0.0)
        self.assertGreaterEqual(rates[0], rates[1])
        self.assertGreaterEqual(rates[1], rates[2])
        self.assertEqual([child.scope for child in report.children], ["reference", "level:0", "level:1", "level:2"])
        self.assertEqual(report.scope, "levels")

    def test_rate_never_rises_across_nested_bands(self):
        scenario = small_energy()
        runner = self.runner(scenario.plan_sets)
        spec = ExperimentSpec(repetitions=6, run_config=RunConfig(iterations=5))
        soft = runner.run_experiment(spec, scope="soft")
        median_plan = np.median(np.vstack([s.global_plan for s in soft.final_states]), axis=0)
        bands = relative_bands(median_plan, (0.5, 0.2, 0.05))
        for loose, tight in zip(bands, bands[1:]):
            self.assertTrue(loose.contains(tight))

        report = runner.envelope_level_sweep(spec.model_copy(update={"levels": bands}))
        rates = [outcome.satisfaction_rate for outcome in report.level_outcomes]
        self.assertGreaterEqual(rates[0], rates[1])
        self.assertGreaterEqual(rates[1], rates[2])
        self.assertEqual(report.level_outcomes[2].envelope, bands[2])

    def test_explicit_envelopes_replace_derived_levels(self):
        env = ConstraintEnvelope(upper=(10.0, 13.0), lower=(None, None))
        spec = ExperimentSpec(repetitions=2, run_config=RunConfig(iterations=2), levels=(env,))
        report = self.runner(three_agent_plan_sets()).envelope_level_sweep(spec)
        self.assertEqual([child.scope for child in report.children], ["level:0"])
        self.assertIsNone(report.level_outcomes[0].fraction)
        self.assertEqual(report.level_outcomes[0].satisfaction_rate, 1.0)


class TestBehavioralShift(HarnessTestCase):

    def test_slack_bound_gives_zero_shift(self):
        scenario = small_energy(num_agents=12, num_plans=3, plan_size=8)
        spec = ExperimentSpec(repetitions=2, run_config=RunConfig(iterations=3),
                              beta_sweep=BetaSweep(step=0.25), shift_bound_margin=math.inf)
        report = self.runner(scenario.plan_sets).behavioral_shift(spec)
        self.assertEqual(len(report.shift_curve), 5)
        for point in report.shift_curve:
            self.assertEqual(point.shift, 0.0)
            self.assertEqual(point.soft_inefficiency, point.hard_inefficiency)
        self.assertEqual(report.mean_shift, 0.0)

    def test_single_plan_agents_do_not_shift(self):
        plan_sets = [PlanSet(i, [[float(i), 1.0, 2.0]], [0.1 * i]) for i in range(5)]
        spec = ExperimentSpec(repetitions=2, run_config=RunConfig(iterations=2), beta_sweep=BetaSweep(step=0.5))
        report = self.runner(plan_sets).behavioral_shift(spec)
        self.assertEqual([p.shift for p in report.shift_curve], [0.0, 0.0, 0.0])

    def test_points_beyond_alpha_are_skipped(self):
        spec = ExperimentSpec(repetitions=1, run_config=RunConfig(iterations=1, weights=BehaviorWeights(alpha=0.5)),
                              beta_sweep=BetaSweep(step=0.25))
        report = self.runner(three_agent_plan_sets()).behavioral_shift(spec)
        self.assertEqual([p.beta for p in report.shift_curve], [0.0, 0.25, 0.5])
        self.assertEqual(len(report.children), 6)
        self.logger.warning.assert_called()

    def test_concurrent_points_match_sequential(self):
        scenario = small_energy(num_agents=10, num_plans=3, plan_size=8)
        spec = ExperimentSpec(repetitions=2, run_config=RunConfig(iterations=3), beta_sweep=BetaSweep(step=0.25))
        sequential = self.runner(scenario.plan_sets, max_workers=1).behavioral_shift(spec)
        concurrent = self.runner(scenario.plan_sets, max_workers=3).behavioral_shift(spec)
        self.assertEqual(concurrent.shift_curve, sequential.shift_curve)
        self.assertEqual([c.scope for c in concurrent.children], [c.scope for c in sequential.children])
        self.assertEqual(list(concurrent.all_rows()), list(sequential.all_rows()))

    def test_full_grid_completes(self):
        scenario = small_energy(num_agents=10, num_plans=3, plan_size=8)
        spec = ExperimentSpec(repetitions=2, run_config=RunConfig(iterations=3), beta_sweep=BetaSweep())
        report = self.runner(scenario.plan_sets, max_workers=2).behavioral_shift(spec)
        grid = BetaSweep().grid()
        self.assertEqual([p.beta for p in report.shift_curve], grid)
        for point in report.shift_curve:
            self.assertIn(point.matched_beta, grid)
            self.assertGreaterEqual(point.shift, -1.0)
            self.assertLessEqual(point.shift, 1.0)
        self.assertEqual(report.children[0].scope, "beta:0:soft")
        self.assertEqual(report.children[1].scope, "beta:0:hard")


@pytest.mark.slow
class TestAtScale(HarnessTestCase):

    def test_thousand_agents(self):
        scenario = small_energy(num_agents=1000, num_plans=10, plan_size=144, seed=0)
        spec = ExperimentSpec(repetitions=20, run_config=RunConfig(iterations=40))
        started = time.perf_counter()
        report = self.runner(scenario.plan_sets, max_workers=4).run_experiment(spec)
        self.assertLess(time.perf_counter() - started, 300.0)
        self.assertLess(psutil.Process().memory_info().rss, 1024 ** 3)
        self.assertEqual(report.tally.trials, 20)

    def test_level_sweep_full_size(self):
        scenario = small_energy(num_agents=100, num_plans=10, plan_size=144, seed=0)
        runner = self.runner(scenario.plan_sets, max_workers=4)
        spec = ExperimentSpec(repetitions=50, run_config=RunConfig(iterations=40))
        soft = runner.run_experiment(spec, scope="soft")
        median_plan = np.median(np.vstack([s.global_plan for s in soft.final_states]), axis=0)
        bands = relative_bands(median_plan, (0.5, 0.2, 0.05))
        report = runner.envelope_level_sweep(spec.model_copy(update={"levels": bands}))
        rates = [outcome.satisfaction_rate for outcome in report.level_outcomes]
        self.assertGreaterEqual(rates[0], rates[1])
        self.assertGreaterEqual(rates[1], rates[2])
        self.assertGreater(rates[0], rates[2])


if __name__ == '__main__':
    unittest.main()
