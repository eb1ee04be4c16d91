import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .config import SimulationConfig, parse_config, settings
from .constraint_files import parse_constraint_files
from .constraints import ConstraintEnvelope, CostEnvelope
from .datasets import ScenarioKind, ScenarioSpec, generate_scenario, load_plan_sets, load_target, write_plan_sets
from .errors import CollectivePlannerError, ConfigurationError, ResultWriteError
from .harness import ExperimentRunner
from .log_manager import LogManager
from .oracle import brute_force_oracle
from .plans import CostFunctionSpec, CostKind, PlanSet
from .results import write_results
from . import event_publisher, SimulationEventType

# Initialized in main()
session_logger: logging.Logger = None # type: ignore

# Flags mirror the properties keys; values stay strings until SimulationConfig validates them.
CONFIG_FLAGS = (
    "numAgents", "numIterations", "numRepetitions", "alpha", "beta", "costFunction", "scenario",
    "planDir", "globalConstraintFile", "costConstraintFile", "seed", "outputDir",
    "numChildren", "numPlans", "planSize", "betaStep", "levelFractions",
)

Inputs = Tuple[List[PlanSet], CostFunctionSpec, Optional[ConstraintEnvelope], Optional[CostEnvelope]]


def custom_excepthook(exc_type, exc_value, exc_traceback):
    if session_logger and session_logger.handlers:
        session_logger.critical(
            "Unhandled exception caught by custom excepthook:",
            exc_info=(exc_type, exc_value, exc_traceback)
        )
    else:
        sys.__excepthook__(exc_type, exc_value, exc_traceback)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Properties file with key=value lines.")
    common.add_argument("--ci", action="store_true", help="Refuse to run without an explicit --seed.")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    for key in CONFIG_FLAGS:
        common.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE")

    parser = argparse.ArgumentParser(prog="collective_planner",
                                     description="Decentralized plan selection under hard constraints.")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("run", parents=[common], help="Run one experiment.")
    commands.add_parser("sweep-beta", parents=[common], help="Behavioral-shift sweep over beta.")
    commands.add_parser("sweep-levels", parents=[common], help="Satisfaction rate per envelope level.")
    commands.add_parser("oracle", parents=[common], help="Enumerate every selection of a small instance.")
    generate = commands.add_parser("generate", parents=[common], help="Write a synthetic dataset as plan files.")
    generate.add_argument("--kind", choices=["energy", "bike", "uav"], default=None)
    return parser


def _load_config(args: argparse.Namespace) -> SimulationConfig:
    overrides = {key: getattr(args, key) for key in CONFIG_FLAGS}
    if getattr(args, "kind", None):
        overrides["scenario"] = args.kind
    return parse_config(args.config, overrides)


def _load_inputs(config: SimulationConfig) -> Inputs:
    if config.plan_dir is not None:
        plan_sets = load_plan_sets(config.plan_dir)
        if config.num_agents is not None and config.num_agents != len(plan_sets):
            raise ConfigurationError(f"{config.num_agents} configured, {len(plan_sets)} plan files found", key="numAgents")
        cost_spec = CostFunctionSpec()
        if config.cost_function is CostKind.RMSE:
            target = load_target(config.plan_dir)
            if target is None:
                raise ConfigurationError(f"RMSE needs a target.csv in {config.plan_dir}", key="costFunction")
            cost_spec = CostFunctionSpec(kind=CostKind.RMSE, target=target)
    else:
        scenario = generate_scenario(ScenarioSpec(kind=config.scenario, num_agents=config.num_agents or 1000,
                                                  num_plans=config.num_plans, plan_size=config.plan_size,
                                                  seed=config.seed))
        plan_sets, cost_spec = list(scenario.plan_sets), scenario.cost_spec
    plan_env, cost_env = parse_constraint_files(config.global_constraint_file, config.cost_constraint_file,
                                                plan_sets[0].plan_size)
    return plan_sets, cost_spec, plan_env, cost_env


def _runner(plan_sets: Sequence[PlanSet]) -> ExperimentRunner:
    return ExperimentRunner(plan_sets, logger=session_logger, publisher=event_publisher, max_workers=settings.MAX_WORKERS)


def _command_run(config: SimulationConfig) -> int:
    plan_sets, cost_spec, plan_env, cost_env = _load_inputs(config)
    spec = config.to_experiment_spec(cost_spec, plan_env, cost_env)
    report = _runner(plan_sets).run_experiment(spec)
    write_results(report, config.output_dir)
    if spec.run_config.constrained:
        session_logger.info(f"Satisfaction rate r={report.satisfaction_rate:.6f}")
    session_logger.info(f"Best final objective {report.best_objective:.6g}")
    return 0


def _command_sweep_beta(config: SimulationConfig) -> int:
    plan_sets, cost_spec, plan_env, cost_env = _load_inputs(config)
    report = _runner(plan_sets).behavioral_shift(config.to_experiment_spec(cost_spec, plan_env, cost_env))
    write_results(report, config.output_dir)
    return 0


def _command_sweep_levels(config: SimulationConfig) -> int:
    plan_sets, cost_spec, plan_env, cost_env = _load_inputs(config)
    spec = config.to_experiment_spec(cost_spec, None, cost_env)
    if plan_env is not None and plan_env.is_active:
        spec = spec.model_copy(update={"levels": (plan_env,)})
    report = _runner(plan_sets).envelope_level_sweep(spec)
    for outcome in report.level_outcomes:
        session_logger.info(f"Level {outcome.level}: r={outcome.satisfaction_rate:.6f}, mean I={outcome.mean_inefficiency:.6g}")
    write_results(report, config.output_dir)
    return 0


def _command_oracle(config: SimulationConfig) -> int:
    plan_sets, cost_spec, plan_env, cost_env = _load_inputs(config)
    result = brute_force_oracle(plan_sets, config.weights, cost_spec, plan_env, cost_env)
    event_publisher.publish(SimulationEventType.ORACLE_COMPLETED, result=result)
    print(f"optimum {result.optimum!r}")
    print("selections " + ",".join(str(j) for j in result.selections))
    print("global " + ",".join(repr(float(v)) for v in result.global_plan))
    print(f"feasible {result.feasible_count}/{result.combinations}")
    if result.feasible_optimum is not None:
        print(f"feasible_optimum {result.feasible_optimum!r}")
    return 0


def _command_generate(config: SimulationConfig) -> int:
    if config.scenario is ScenarioKind.FILE:
        raise ConfigurationError("FILE cannot be generated; choose energy, bike or uav", key="scenario")
    scenario = generate_scenario(ScenarioSpec(kind=config.scenario, num_agents=config.num_agents or 1000,
                                              num_plans=config.num_plans, plan_size=config.plan_size,
                                              seed=config.seed))
    directory = config.plan_dir or config.output_dir
    write_plan_sets(scenario.plan_sets, directory, scenario.cost_spec.target)
    event_publisher.publish(SimulationEventType.DATASET_WRITTEN, path=directory, agents=len(scenario.plan_sets))
    return 0


COMMANDS: Dict[str, Callable[[SimulationConfig], int]] = {
    "run": _command_run,
    "sweep-beta": _command_sweep_beta,
    "sweep-levels": _command_sweep_levels,
    "oracle": _command_oracle,
    "generate": _command_generate,
}


def _progress_handlers() -> Dict[SimulationEventType, Callable[..., None]]:
    def on_experiment_started(total_repetitions: int):
        session_logger.info(f"Running {total_repetitions} repetition(s)...")

    def on_repetition_completed(repetition: int, state):
        session_logger.debug(f"Repetition {repetition}: objective={state.objective:.6g} satisfied={state.satisfied}")

    def on_sweep_point_completed(label: str, value: float):
        session_logger.info(f"{label}: {value:.6g}")

    def on_dataset_written(path: Path, agents: int):
        session_logger.info(f"Wrote {agents} agent plan file(s) to {path}")

    def on_oracle_completed(result):
        session_logger.info(f"Oracle enumerated {result.combinations} combination(s), {result.feasible_count} feasible")

    return {
        SimulationEventType.EXPERIMENT_STARTED: on_experiment_started,
        SimulationEventType.REPETITION_COMPLETED: on_repetition_completed,
        SimulationEventType.SWEEP_POINT_COMPLETED: on_sweep_point_completed,
        SimulationEventType.DATASET_WRITTEN: on_dataset_written,
        SimulationEventType.ORACLE_COMPLETED: on_oracle_completed,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    global session_logger

    parser = build_parser()
    args = parser.parse_args(argv)
    if args.ci and args.seed is None:
        parser.error("--ci requires an explicit --seed")

    log_manager = LogManager(
        log_dir=settings.LOG_DIR, debug_mode=settings.DEBUG or args.verbose,
        max_files_to_keep_in_archive=settings.MAX_LOG_FILES, max_log_age_days=settings.MAX_LOG_AGE_DAYS
    )
    session_logger = log_manager.get_session_logger()
    sys.excepthook = custom_excepthook
    session_logger.info(f"Starting {settings.APP_NAME}: {args.command}")

    try:
        config = _load_config(args)
        if settings.DEBUG:
            session_logger.debug(f"Simulation configuration: {config.model_dump_json(by_alias=True)}")
        with event_publisher.subscriptions(_progress_handlers()):
            return COMMANDS[args.command](config)
    except (ResultWriteError, OSError) as e:
        session_logger.error(str(e))
        return 1
    except CollectivePlannerError as e:
        session_logger.error(str(e))
        return 2
    finally:
        log_manager.close()


if __name__ == "__main__":
    sys.exit(main())
