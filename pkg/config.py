"""
Run configuration for the semantic risk planner

One human-editable document (YAML or JSON) holds the experiment bundle;
command-line flags override individual values. API keys are read from the
environment only and never appear here.
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from utils.cost_field import CostFieldConfig
from utils.errors import ConfigError, RiskPlannerError
from utils.planner import PlannerConfig
from utils.risk_posterior import BootstrapConfig
from utils.semantic_sensor import PROMPT_PRESETS, SensorConfig
from utils.validation import require_valid

logger = logging.getLogger(__name__)

DEFAULT_MAP = "maps/construction_site.json"
DEFAULT_MOCK_PARAMS = (5.0, 5.0)
MODES = ("live", "mock", "cached")

_SECTIONS = {
    "sensor": SensorConfig,
    "bootstrap": BootstrapConfig,
    "field": CostFieldConfig,
    "planner": PlannerConfig,
}


@dataclass(frozen=True)
class RunConfig:
    map_path: str = DEFAULT_MAP
    prompt_text: str = PROMPT_PRESETS["busy"]
    mode: str = "live"
    seed: int = 7
    cache_path: Optional[str] = None
    outputs: str = "outputs"
    threshold: Optional[float] = None
    fixed_cost_weight: float = 0.5
    mock_params: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    # declared last: the attribute name shadows dataclasses.field in the class body
    field: CostFieldConfig = field(default_factory=CostFieldConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("invalid_value", f"mode must be one of {MODES}, got '{self.mode}'")
        if self.mode == "cached" and not self.cache_path:
            raise ConfigError("usage", "cached mode needs a cache path")
        if not self.prompt_text or not self.prompt_text.strip():
            raise ConfigError("invalid_value", "prompt text must be non-empty")
        if self.threshold is not None and self.threshold < 0:
            raise ConfigError("invalid_value", "threshold must be >= 0")
        if not 0.0 <= self.fixed_cost_weight <= 1.0:
            raise ConfigError("invalid_value", "fixed_cost_weight must be in [0, 1]")

    def beta_params(self, class_names) -> Dict[str, Tuple[float, float]]:
        """Mock Beta parameters for every class, Beta(5, 5) unless configured"""
        return {name: tuple(self.mock_params.get(name, DEFAULT_MOCK_PARAMS)) for name in class_names}

    def to_document(self) -> Dict[str, Any]:
        document = asdict(self)
        document["mock_params"] = {k: list(v) for k, v in sorted(self.mock_params.items())}
        return document


def _deep_merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            merged[key] = _deep_merge(merged.get(key) or {}, value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML/JSON config document

    Args:
        path: config file path

    Returns:
        dict: parsed document (empty for an empty file)
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("io", f"cannot read config {path}: {e}") from e

    try:
        document = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError("malformed", f"config {path} is not valid YAML/JSON: {e}") from e

    if not isinstance(document, dict):
        raise ConfigError("malformed", f"config {path} must hold a mapping")
    return document


def build_run_config(document: Mapping[str, Any]) -> RunConfig:
    """Validate a config document and construct the RunConfig"""
    require_valid(dict(document), "run_config", ConfigError)

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(document) - known)
    if unknown:
        raise ConfigError("malformed", f"unknown config keys: {unknown}")

    kwargs = {k: v for k, v in document.items() if k not in _SECTIONS}
    try:
        for name, section_cls in _SECTIONS.items():
            kwargs[name] = section_cls(**document.get(name, {}))
        if "mock_params" in kwargs:
            kwargs["mock_params"] = {k: tuple(v) for k, v in kwargs["mock_params"].items()}
        return RunConfig(**kwargs)
    except TypeError as e:
        raise ConfigError("malformed", f"invalid config section: {e}") from e
    except ConfigError:
        raise
    except RiskPlannerError as e:
        raise ConfigError("invalid_value", str(e)) from e


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Resolve the run configuration: defaults < config file < overrides

    Args:
        path: optional YAML/JSON config file
        overrides: nested mapping (e.g. from CLI flags); None values are ignored

    Returns:
        RunConfig
    """
    document: Dict[str, Any] = {}
    if path:
        document = read_config_file(path)
        logger.info("loaded config from %s", path)
    if overrides:
        document = _deep_merge(document, overrides)

    # gamma is one knob shared by the field and the planner; the field echoes alpha
    planner_doc = dict(document.get("planner", {}))
    field_doc = dict(document.get("field", {}))
    gamma = planner_doc.get("gamma", field_doc.get("gamma"))
    if gamma is not None:
        planner_doc["gamma"] = field_doc["gamma"] = gamma
    alpha = document.get("bootstrap", {}).get("alpha")
    if alpha is not None:
        field_doc["alpha"] = alpha
    document = {**document, "planner": planner_doc, "field": field_doc}

    return build_run_config(document)
