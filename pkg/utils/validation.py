"""
Document validation utilities

JSON schemas for every document the planner reads (map, sample cache,
posterior export, run config) plus helpers that report or raise.
"""

from typing import Any, Dict, Type

from jsonschema import Draft7Validator

from utils.errors import RiskPlannerError

_CELL = {
    "type": "array",
    "items": {"type": "integer"},
    "minItems": 2,
    "maxItems": 2,
}

_RECT = {
    "type": "array",
    "items": {"type": "integer"},
    "minItems": 4,
    "maxItems": 4,
}

MAP_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["width", "height", "start", "goal", "classes"],
    "properties": {
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "start": _CELL,
        "goal": _CELL,
        "classes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {
                    "name": {"type": "string"},
                    "lambda_prior": {"type": "number", "minimum": 0},
                    "cells": {"type": "array", "items": _CELL},
                    "rects": {"type": "array", "items": _RECT},
                },
            },
        },
    },
}

CACHE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["prompt_digest", "k", "temperature", "per_class"],
    "properties": {
        "prompt_digest": {"type": "string", "minLength": 1},
        "k": {"type": "integer", "minimum": 1},
        "temperature": {"type": "number"},
        "per_class": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 1,
            },
        },
    },
}

_POSTERIOR_ENTRY = {
    "type": "object",
    "required": ["mean", "var_alpha", "cvar_alpha", "R", "alpha", "seed"],
    "properties": {
        "mean": {"type": "number"},
        "var_alpha": {"type": "number"},
        "cvar_alpha": {"type": "number"},
        "R": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer"},
    },
}

POSTERIOR_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": _POSTERIOR_ENTRY,
}

_SECTION = {"type": "object"}

RUN_CONFIG_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "map_path": {"type": "string"},
        "prompt_text": {"type": "string"},
        "mode": {"enum": ["live", "mock", "cached"]},
        "seed": {"type": "integer"},
        "cache_path": {"type": ["string", "null"]},
        "outputs": {"type": "string"},
        "threshold": {"type": ["number", "null"]},
        "fixed_cost_weight": {"type": "number", "minimum": 0, "maximum": 1},
        "mock_params": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "sensor": _SECTION,
        "bootstrap": _SECTION,
        "field": _SECTION,
        "planner": _SECTION,
    },
}

SCHEMAS = {
    "map": MAP_SCHEMA,
    "cache": CACHE_SCHEMA,
    "posterior": POSTERIOR_SCHEMA,
    "run_config": RUN_CONFIG_SCHEMA,
}


def validate_document(document: Any, schema_name: str) -> Dict[str, Any]:
    """
    Validate a parsed document against one of the named schemas

    Args:
        document: Parsed JSON/YAML value
        schema_name: One of 'map', 'cache', 'posterior', 'run_config'

    Returns:
        dict: {"valid": bool, "issues": list of readable messages}
    """
    validator = Draft7Validator(SCHEMAS[schema_name])
    issues = []
    for error in sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path)):
        location = "/".join(str(p) for p in error.absolute_path) or "<root>"
        issues.append(f"{location}: {error.message}")

    return {"valid": not issues, "issues": issues}


def require_valid(
    document: Any,
    schema_name: str,
    error_cls: Type[RiskPlannerError],
    code: str = "malformed",
) -> None:
    """Raise ``error_cls(code)`` listing the schema violations, if any"""
    result = validate_document(document, schema_name)
    if not result["valid"]:
        raise error_cls(code, f"invalid {schema_name} document: " + "; ".join(result["issues"][:5]))
