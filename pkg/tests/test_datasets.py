import unittest
from pathlib import Path
import tempfile

import numpy as np

import sys
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from collective_planner.datasets import (ScenarioKind, ScenarioSpec, generate_scenario, load_plan_sets, load_target,
                                         write_plan_sets)
from collective_planner.errors import ConfigurationError, DimensionError, PlanParseError
from collective_planner.plans import CostKind

FIXTURE_DIR = project_root / "tests" / "fixtures" / "three_agents"


class TestPlanFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_load_fixture(self):
        plan_sets = load_plan_sets(FIXTURE_DIR)
        self.assertEqual(len(plan_sets), 3)
        np.testing.assert_array_equal(plan_sets[0].values, [[3.0, 5.0], [2.0, 7.0]])
        np.testing.assert_array_equal(plan_sets[2].scores, [0.0, 1.0])
        self.assertIsNone(load_target(FIXTURE_DIR))

    def test_agents_ordered_numerically(self):
        (self.dir / "agent_10.plans").write_text("0:1,1\n", encoding="utf-8")
        (self.dir / "agent_2.plans").write_text("0:2,2\n", encoding="utf-8")
        (self.dir / "notes.txt").write_text("ignored", encoding="utf-8")
        plan_sets = load_plan_sets(self.dir)
        self.assertEqual([ps.agent_id for ps in plan_sets], [0, 1])
        np.testing.assert_array_equal(plan_sets[0].values, [[2.0, 2.0]])

    def test_parse_errors_carry_line_numbers(self):
        (self.dir / "agent_0.plans").write_text("0:1,2\n0.5 1,2\n", encoding="utf-8")
        with self.assertRaises(PlanParseError) as ctx:
            load_plan_sets(self.dir)
        self.assertEqual(ctx.exception.line_number, 2)

    def test_non_numeric_value(self):
        (self.dir / "agent_0.plans").write_text("0:1,two\n", encoding="utf-8")
        with self.assertRaises(PlanParseError):
            load_plan_sets(self.dir)

    def test_empty_file_and_missing_directory(self):
        (self.dir / "agent_0.plans").write_text("\n", encoding="utf-8")
        with self.assertRaises(PlanParseError):
            load_plan_sets(self.dir)
        with self.assertRaises(PlanParseError):
            load_plan_sets(self.dir / "absent")
        with self.assertRaises(PlanParseError):
            load_plan_sets(FIXTURE_DIR.parent)

    def test_undecodable_files_raise_parse_errors(self):
        (self.dir / "agent_0.plans").write_bytes(b"\xff\xfe0:1,2\n")
        with self.assertRaises(PlanParseError) as ctx:
            load_plan_sets(self.dir)
        self.assertEqual(ctx.exception.path, self.dir / "agent_0.plans")

        (self.dir / "agent_0.plans").write_text("0:1,2\n", encoding="utf-8")
        (self.dir / "target.csv").write_bytes(b"1.0\n\xff\n")
        with self.assertRaises(PlanParseError) as ctx:
            load_target(self.dir)
        self.assertEqual(ctx.exception.path.name, "target.csv")

    def test_unreadable_plan_file(self):
        (self.dir / "agent_0.plans").mkdir()
        with self.assertRaises(PlanParseError):
            load_plan_sets(self.dir)

    def test_mismatched_dimensions(self):
        (self.dir / "agent_0.plans").write_text("0:1,2\n", encoding="utf-8")
        (self.dir / "agent_1.plans").write_text("0:1,2,3\n", encoding="utf-8")
        with self.assertRaises(DimensionError):
            load_plan_sets(self.dir)

    def test_written_plans_load_back_identically(self):
        scenario = generate_scenario(ScenarioSpec(kind="uav", num_agents=5, num_plans=4, plan_size=16, seed=3))
        write_plan_sets(scenario.plan_sets, self.dir, scenario.cost_spec.target)
        loaded = load_plan_sets(self.dir)
        for original, reread in zip(scenario.plan_sets, loaded):
            self.assertTrue(np.array_equal(original.values, reread.values))
            self.assertTrue(np.array_equal(original.scores, reread.scores))
        self.assertEqual(load_target(self.dir), scenario.cost_spec.target)

    def test_file_scenario_uses_target_for_rmse(self):
        scenario = generate_scenario(ScenarioSpec(kind="uav", num_agents=3, num_plans=2, plan_size=4, seed=0))
        write_plan_sets(scenario.plan_sets, self.dir, scenario.cost_spec.target)
        loaded = generate_scenario(ScenarioSpec(kind=ScenarioKind.FILE, plan_dir=self.dir))
        self.assertIs(loaded.cost_spec.kind, CostKind.RMSE)
        self.assertIs(generate_scenario(ScenarioSpec(kind="file", plan_dir=FIXTURE_DIR)).cost_spec.kind, CostKind.VARIANCE)

    def test_file_scenario_requires_directory(self):
        with self.assertRaises(ConfigurationError) as ctx:
            generate_scenario(ScenarioSpec(kind=ScenarioKind.FILE))
        self.assertEqual(ctx.exception.key, "planDir")


class TestGeneratedScenarios(unittest.TestCase):

    def test_kind_names(self):
        self.assertIs(ScenarioKind.parse("energy"), ScenarioKind.ENERGY_LIKE)
        self.assertIs(ScenarioKind.parse("BIKE_LIKE"), ScenarioKind.BIKE_LIKE)
        self.assertIs(ScenarioKind.parse("File"), ScenarioKind.FILE)
        with self.assertRaises(ValueError):
            ScenarioKind.parse("trains")

    def test_same_seed_same_scenario(self):
        for kind in ("energy", "bike", "uav"):
            with self.subTest(kind=kind):
                first = generate_scenario(ScenarioSpec(kind=kind, num_agents=8, seed=5))
                second = generate_scenario(ScenarioSpec(kind=kind, num_agents=8, seed=5))
                for a, b in zip(first.plan_sets, second.plan_sets):
                    self.assertTrue(np.array_equal(a.values, b.values))
                    self.assertTrue(np.array_equal(a.scores, b.scores))

    def test_energy_shape(self):
        scenario = generate_scenario(ScenarioSpec(kind="energy", num_agents=6, seed=1))
        self.assertEqual({ps.values.shape for ps in scenario.plan_sets}, {(10, 144)})
        self.assertTrue(all(np.all(ps.values >= 0) for ps in scenario.plan_sets))
        self.assertTrue(all(ps.scores[0] == 0.0 and np.all(ps.scores <= 1.0) for ps in scenario.plan_sets))
        self.assertIs(scenario.cost_spec.kind, CostKind.VARIANCE)

    def test_bike_plan_counts_vary(self):
        scenario = generate_scenario(ScenarioSpec(kind="bike", num_agents=60, seed=2))
        counts = [ps.num_plans for ps in scenario.plan_sets]
        self.assertTrue(all(1 <= k <= 24 for k in counts))
        self.assertGreater(len(set(counts)), 1)
        self.assertEqual({ps.plan_size for ps in scenario.plan_sets}, {98})
        for plan_set in scenario.plan_sets:
            np.testing.assert_array_equal(plan_set.values.sum(axis=1), 0.0)

    def test_uav_grid_and_target(self):
        scenario = generate_scenario(ScenarioSpec(kind="uav", num_agents=10, seed=4))
        self.assertEqual({ps.values.shape for ps in scenario.plan_sets}, {(64, 64)})
        self.assertIs(scenario.cost_spec.kind, CostKind.RMSE)
        self.assertEqual(len(scenario.cost_spec.target), 64)
        self.assertAlmostEqual(sum(scenario.cost_spec.target), 10.0)
        self.assertTrue(all(np.all(np.count_nonzero(ps.values, axis=1) == 1) for ps in scenario.plan_sets))

    def test_uav_requires_square_grid(self):
        with self.assertRaises(DimensionError):
            generate_scenario(ScenarioSpec(kind="uav", num_agents=2, plan_size=10))


if __name__ == '__main__':
    unittest.main()
