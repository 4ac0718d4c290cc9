# File: utils/errors.py
"""
Exception hierarchy for the semantic risk planner

Every error carries a short machine-readable ``code`` and the process exit
code the CLI should use when it reaches the top level.
"""

from typing import Optional


class RiskPlannerError(Exception):
    """Base class for all library errors"""

    exit_code = 1

    def __init__(self, code: str, message: Optional[str] = None):
        self.code = code
        super().__init__(message or code)

    def __str__(self) -> str:
        base = super().__str__()
        return base if base == self.code else f"[{self.code}] {base}"


class ConfigError(RiskPlannerError):
    exit_code = 4


class MapLoadError(RiskPlannerError):
    exit_code = 4


class SensorError(RiskPlannerError):
    exit_code = 3


class CacheError(RiskPlannerError):
    exit_code = 3


class PosteriorError(RiskPlannerError):
    pass


class CostFieldError(RiskPlannerError):
    pass


class PlanningError(RiskPlannerError):
    pass


class NoPathError(RiskPlannerError):
    """Planner feasibility failure (unreachable goal or cost threshold)"""

    exit_code = 2


class MetricsError(RiskPlannerError):
    pass


class RenderError(RiskPlannerError):
    pass
