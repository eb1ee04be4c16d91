from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .constraints import ConstraintEnvelope, CostEnvelope, check_level_fraction
from .datasets import ScenarioKind
from .engine import RunConfig
from .errors import ConfigurationError
from .plans import BehaviorWeights, CostFunctionSpec, CostKind

DOTENV_PATH = Path(__file__).resolve().parent / '.env'

class Settings(BaseSettings):
    """
    Process-wide settings.
    Values can be overridden by environment variables or a .env file in the package directory.
    """
    DEBUG: bool = False
    LOG_DIR_NAME: str = "logs"
    MAX_LOG_FILES: int = 3
    MAX_LOG_AGE_DAYS: int = 5
    APP_NAME: str = "Collective Planner"
    MAX_WORKERS: int = 4 # Threads for repetitions and oracle chunks
    ORACLE_MAX_COMBINATIONS: int = 2 ** 20
    ORACLE_CHUNK_SIZE: int = 65536
    DEFAULT_ARITY: int = 2
    LEVEL_FRACTIONS: Tuple[float, ...] = (float("inf"), 1.0, 0.5)

    model_config = SettingsConfigDict(
        env_file=DOTENV_PATH,
        env_file_encoding='utf-8',
        extra='ignore'
    )

    @property
    def LOG_DIR(self) -> Path:
        return Path.cwd() / self.LOG_DIR_NAME

settings = Settings()

def get_all_current_settings() -> dict: # Still useful for debugging if needed
    """Returns all current settings values as a dictionary."""
    return Settings().model_dump()


class SimulationConfig(BaseModel):
    """The keys of a simulation properties file. Unknown keys are rejected."""
    model_config = ConfigDict(extra='forbid', frozen=True, populate_by_name=True)

    num_agents: Optional[int] = Field(default=None, ge=1, alias="numAgents")
    num_iterations: int = Field(default=40, ge=1, alias="numIterations")
    num_repetitions: int = Field(default=200, ge=1, alias="numRepetitions")
    alpha: float = Field(default=0.0, ge=0.0, le=1.0)
    beta: float = Field(default=0.0, ge=0.0, le=1.0)
    cost_function: CostKind = Field(default=CostKind.VARIANCE, alias="costFunction")
    scenario: ScenarioKind = ScenarioKind.ENERGY_LIKE
    plan_dir: Optional[Path] = Field(default=None, alias="planDir")
    global_constraint_file: Optional[Path] = Field(default=None, alias="globalConstraintFile")
    cost_constraint_file: Optional[Path] = Field(default=None, alias="costConstraintFile")
    seed: int = 0
    output_dir: Path = Field(default=Path("results"), alias="outputDir")
    num_children: int = Field(default_factory=lambda: settings.DEFAULT_ARITY, ge=1, alias="numChildren")
    num_plans: Optional[int] = Field(default=None, ge=1, alias="numPlans")
    plan_size: Optional[int] = Field(default=None, ge=1, alias="planSize")
    beta_step: float = Field(default=0.025, gt=0.0, alias="betaStep")
    level_fractions: Tuple[float, ...] = Field(default_factory=lambda: tuple(settings.LEVEL_FRACTIONS), alias="levelFractions")

    @field_validator("cost_function", mode="before")
    @classmethod
    def _cost_kind(cls, value: Any) -> Any:
        return value.strip().upper() if isinstance(value, str) else value

    @field_validator("scenario", mode="before")
    @classmethod
    def _scenario_kind(cls, value: Any) -> Any:
        return ScenarioKind.parse(value) if isinstance(value, str) else value

    @field_validator("level_fractions", mode="before")
    @classmethod
    def _comma_separated(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(float(part) for part in value.split(",") if part.strip())
        return value

    @field_validator("level_fractions")
    @classmethod
    def _fractions_in_range(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        return tuple(check_level_fraction(f) for f in value)

    @model_validator(mode="after")
    def _weights(self) -> "SimulationConfig":
        if self.alpha + self.beta > 1.0 + 1e-12:
            raise ValueError(f"alpha + beta must be <= 1, got {self.alpha} + {self.beta}")
        return self

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SimulationConfig":
        """Validates raw key/value pairs, reporting the first offending key."""
        try:
            return cls.model_validate(dict(values))
        except ValidationError as e:
            error = e.errors()[0]
            key = ".".join(str(part) for part in error["loc"]) or None
            raise ConfigurationError(error["msg"], key=key) from e

    @property
    def weights(self) -> BehaviorWeights:
        return BehaviorWeights(alpha=self.alpha, beta=self.beta)

    def to_run_config(self, cost_spec: CostFunctionSpec, plan_env: Optional[ConstraintEnvelope] = None,
                      cost_env: Optional[CostEnvelope] = None) -> RunConfig:
        return RunConfig(iterations=self.num_iterations, weights=self.weights, cost_spec=cost_spec,
                         plan_env=plan_env, cost_env=cost_env, seed=self.seed, arity=self.num_children)

    def to_experiment_spec(self, cost_spec: CostFunctionSpec, plan_env: Optional[ConstraintEnvelope] = None,
                           cost_env: Optional[CostEnvelope] = None):
        from .harness import BetaSweep, ExperimentSpec
        return ExperimentSpec(repetitions=self.num_repetitions,
                              run_config=self.to_run_config(cost_spec, plan_env, cost_env),
                              level_fractions=self.level_fractions,
                              beta_sweep=BetaSweep(step=self.beta_step),
                              base_seed=self.seed)


def parse_properties(path: Path) -> Dict[str, str]:
    """Reads `key=value` lines; `#` and `!` start comments."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read {path} ({e.strerror or e})") from e
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#!":
            continue
        key, separator, value = line.partition("=")
        if not separator:
            key, separator, value = line.partition(":")
        if not separator or not key.strip():
            raise ConfigurationError(f"{path}:{line_number}: expected key=value")
        key = key.strip()
        if key in values:
            raise ConfigurationError(f"{path}:{line_number}: key given twice", key=key)
        values[key] = value.strip()
    return values


def parse_config(path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None) -> SimulationConfig:
    """File values over defaults, overrides (command-line flags) over both."""
    values: Dict[str, Any] = {key: value for key, value in (parse_properties(path) if path is not None else {}).items() if value != ""}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return SimulationConfig.from_mapping(values)
