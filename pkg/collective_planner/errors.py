from pathlib import Path
from typing import Optional


class CollectivePlannerError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(CollectivePlannerError):
    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DimensionError(ConfigurationError):
    """Raised when a plan, target or envelope does not match the plan dimension m."""


class _LocatedError(CollectivePlannerError):
    def __init__(self, message: str, path: Path, line_number: Optional[int] = None):
        self.path = Path(path)
        self.line_number = line_number
        location = f"{self.path}:{line_number}" if line_number is not None else str(self.path)
        super().__init__(f"{location}: {message}")


class PlanParseError(_LocatedError):
    pass


class ConstraintFileError(_LocatedError):
    pass


class InvalidSelectionError(CollectivePlannerError):
    """A selection does not name exactly one plan per agent."""


class UndefinedRateError(CollectivePlannerError):
    pass


class OracleCapacityError(CollectivePlannerError):
    def __init__(self, combinations: int, cap: int):
        self.combinations = combinations
        self.cap = cap
        super().__init__(f"Refusing to enumerate {combinations} combinations (cap is {cap}).")


class ResultWriteError(CollectivePlannerError):
    def __init__(self, path: Path, reason: str):
        self.path = Path(path)
        super().__init__(f"Could not write {self.path}: {reason}")
