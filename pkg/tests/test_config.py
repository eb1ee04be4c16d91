import unittest
from unittest.mock import patch
from pathlib import Path
import math
import os
import tempfile

import sys
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from collective_planner.config import Settings, SimulationConfig, get_all_current_settings, parse_config, parse_properties
from collective_planner.datasets import ScenarioKind
from collective_planner.errors import ConfigurationError
from collective_planner.plans import CostFunctionSpec, CostKind

NO_ENV_FILE = Path("/path/to/absolutely/non_existent_dummy.env")


class TestSettings(unittest.TestCase):

    def test_default_settings_load(self):
        """Defaults apply when no .env file or environment variables are present."""
        with patch.dict(os.environ, {}, clear=True):
            settings = Settings(_env_file=NO_ENV_FILE)
            self.assertEqual(settings.DEBUG, False)
            self.assertEqual(settings.MAX_LOG_FILES, 3)
            self.assertEqual(settings.MAX_WORKERS, 4)
            self.assertEqual(settings.ORACLE_MAX_COMBINATIONS, 2 ** 20)
            self.assertEqual(settings.DEFAULT_ARITY, 2)
            self.assertEqual(settings.LOG_DIR_NAME, "logs")
            self.assertTrue(math.isinf(settings.LEVEL_FRACTIONS[0]))

    def test_env_file_override(self):
        env_content = """
DEBUG=true
MAX_WORKERS=2
ORACLE_MAX_COMBINATIONS=1000
MAX_LOG_FILES=7
        """
        with tempfile.NamedTemporaryFile(mode="w+", delete=False, suffix=".env") as tmp_env:
            tmp_env.write(env_content)
            tmp_env_path = Path(tmp_env.name)

        try:
            with patch.dict(os.environ, {}, clear=True):
                settings_from_env = Settings(_env_file=tmp_env_path)
                self.assertEqual(settings_from_env.DEBUG, True)
                self.assertEqual(settings_from_env.MAX_WORKERS, 2)
                self.assertEqual(settings_from_env.ORACLE_MAX_COMBINATIONS, 1000)
                self.assertEqual(settings_from_env.MAX_LOG_FILES, 7)
        finally:
            os.unlink(tmp_env_path)

    def test_environment_variable_override(self):
        with patch.dict(os.environ, {"DEFAULT_ARITY": "3"}, clear=True):
            self.assertEqual(Settings(_env_file=NO_ENV_FILE).DEFAULT_ARITY, 3)

    def test_log_dir_follows_working_directory(self):
        with patch.dict(os.environ, {}, clear=True):
            s = Settings(_env_file=NO_ENV_FILE)
            self.assertEqual(s.LOG_DIR, Path.cwd() / "logs")

    def test_get_all_current_settings(self):
        with patch.object(Settings, 'model_config', new={'env_file': NO_ENV_FILE, 'extra': 'ignore'}), \
             patch.dict(os.environ, {}, clear=True):
            current_settings = get_all_current_settings()
            self.assertIsInstance(current_settings, dict)
            self.assertEqual(current_settings['DEBUG'], False)
            self.assertEqual(current_settings['APP_NAME'], "Collective Planner")


class TestSimulationConfig(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, text: str) -> Path:
        path = self.dir / "cfg.properties"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults(self):
        config = SimulationConfig()
        self.assertEqual(config.num_iterations, 40)
        self.assertEqual(config.num_repetitions, 200)
        self.assertEqual((config.alpha, config.beta), (0.0, 0.0))
        self.assertIs(config.cost_function, CostKind.VARIANCE)
        self.assertIs(config.scenario, ScenarioKind.ENERGY_LIKE)
        self.assertEqual(config.output_dir, Path("results"))

    def test_parse_properties_file(self):
        path = self._write("# comment\n! also a comment\n\nnumIterations=40\nbeta = 0.475\nscenario=uav\ncostFunction=rmse\n")
        config = parse_config(path)
        self.assertEqual(config.num_iterations, 40)
        self.assertEqual(config.beta, 0.475)
        self.assertIs(config.scenario, ScenarioKind.UAV_LIKE)
        self.assertIs(config.cost_function, CostKind.RMSE)

    def test_colon_separator_and_empty_value(self):
        path = self._write("seed: 7\nplanDir=\n")
        config = parse_config(path)
        self.assertEqual(config.seed, 7)
        self.assertIsNone(config.plan_dir)

    def test_unknown_key_rejected_with_its_name(self):
        path = self._write("numIterations=10\nnumIteratons=12\n")
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(path)
        self.assertEqual(ctx.exception.key, "numIteratons")

    def test_invalid_value_names_key(self):
        path = self._write("numRepetitions=zero\n")
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config(path)
        self.assertEqual(ctx.exception.key, "numRepetitions")

    def test_weights_over_one_rejected(self):
        with self.assertRaises(ConfigurationError):
            parse_config(self._write("alpha=0.6\nbeta=0.6\n"))

    def test_duplicate_key_rejected(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_properties(self._write("seed=1\nseed=2\n"))
        self.assertEqual(ctx.exception.key, "seed")

    def test_missing_separator_rejected(self):
        with self.assertRaises(ConfigurationError):
            parse_properties(self._write("numIterations 40\n"))

    def test_unreadable_file(self):
        with self.assertRaises(ConfigurationError):
            parse_properties(self.dir / "missing.properties")

    def test_override_precedence(self):
        path = self._write("numIterations=10\nseed=3\n")
        config = parse_config(path, {"numIterations": "25", "seed": None})
        self.assertEqual(config.num_iterations, 25)  # flag beats file
        self.assertEqual(config.seed, 3)             # unset flag keeps file value
        self.assertEqual(config.num_repetitions, 200)  # default

    def test_level_fractions_parse(self):
        config = parse_config(None, {"levelFractions": "inf,0.5,0"})
        self.assertTrue(math.isinf(config.level_fractions[0]))
        self.assertEqual(config.level_fractions[1:], (0.5, 0.0))

    def test_level_fractions_out_of_range_rejected(self):
        for text in ("nan", "-0.5", "inf,1.5", "-inf"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigurationError) as ctx:
                    parse_config(None, {"levelFractions": text})
                self.assertEqual(ctx.exception.key, "levelFractions")

    def test_to_experiment_spec(self):
        config = parse_config(None, {"numIterations": "5", "numRepetitions": "3", "alpha": "0.1",
                                     "beta": "0.2", "seed": "11", "numChildren": "3", "betaStep": "0.25"})
        spec = config.to_experiment_spec(CostFunctionSpec())
        self.assertEqual(spec.repetitions, 3)
        self.assertEqual(spec.base_seed, 11)
        self.assertEqual(spec.run_config.iterations, 5)
        self.assertEqual(spec.run_config.arity, 3)
        self.assertEqual(spec.run_config.weights.alpha, 0.1)
        self.assertEqual(spec.run_config.weights.beta, 0.2)
        self.assertEqual(spec.beta_sweep.grid(), [0.0, 0.25, 0.5, 0.75, 1.0])
        self.assertFalse(spec.run_config.constrained)


if __name__ == '__main__':
    unittest.main()
