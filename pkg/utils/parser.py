# File: utils/parser.py
"""
Parsing utilities for converting LLM completions into danger ratings
"""

import logging
import math
import re
from typing import Dict, Sequence

import orjson

logger = logging.getLogger(__name__)

_JSON_OBJECT = re.compile(r"\{.*\}", re.DOTALL)


class MalformedCompletion(ValueError):
    """A completion that cannot be turned into one rating per class"""


def extract_json_object(content: str) -> dict:
    """
    Find and decode the JSON object in a completion

    Args:
        content: raw message content; code fences or chatter around the
            object are tolerated

    Returns:
        dict: decoded object
    """
    if not content or not content.strip():
        raise MalformedCompletion("empty completion")

    match = _JSON_OBJECT.search(content)
    if not match:
        raise MalformedCompletion(f"no JSON object in completion: {content[:80]!r}")

    try:
        data = orjson.loads(match.group())
    except orjson.JSONDecodeError as e:
        raise MalformedCompletion(f"invalid JSON: {e}") from e

    if not isinstance(data, dict):
        raise MalformedCompletion("completion JSON is not an object")
    return data


def clamp_rating(value: float) -> float:
    return min(1.0, max(0.0, value))


def parse_ratings(content: str, class_names: Sequence[str]) -> Dict[str, float]:
    """
    Parse one completion into a rating per class

    Args:
        content: completion text holding a JSON object label -> number
        class_names: labels that must all be present

    Returns:
        dict: label -> rating clamped to [0, 1], in class_names order
    """
    data = extract_json_object(content)
    ratings = {}

    for name in class_names:
        if name not in data:
            raise MalformedCompletion(f"completion is missing class '{name}'")

        value = data[name]
        # bool is an int subclass; "true" is not a rating
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedCompletion(f"rating for '{name}' is not numeric: {value!r}")
        if not math.isfinite(value):
            raise MalformedCompletion(f"rating for '{name}' is not finite")

        rating = clamp_rating(float(value))
        if rating != value:
            logger.warning("clamped rating for '%s' from %s to %s", name, value, rating)
        ratings[name] = rating

    return ratings
