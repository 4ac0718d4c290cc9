# File: utils/export.py
"""
Export utilities for planner artifacts

All writers produce deterministic bytes for identical inputs so that
mock/cached pipeline runs can be compared byte for byte.
"""

import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import orjson
import pandas as pd

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# keys keep insertion order: class-keyed documents follow the map's class order
JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS

PathLike = Union[str, Path]


def to_json_bytes(document: Any) -> bytes:
    """
    Serialize a document to JSON bytes

    Args:
        document: dicts/lists/scalars/numpy arrays; NaN and inf become null

    Returns:
        bytes: UTF-8 JSON terminated by a newline
    """
    return orjson.dumps(document, option=JSON_OPTIONS) + b"\n"


def write_bytes(path: PathLike, data: bytes) -> Path:
    """Write bytes, creating parent directories"""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
    except OSError as e:
        raise ConfigError("io", f"cannot write {target}: {e}") from e

    logger.debug("wrote %d bytes to %s", len(data), target)
    return target


def export_to_json(document: Any, path: PathLike) -> Path:
    return write_bytes(path, to_json_bytes(document))


def export_table_text(df: pd.DataFrame, float_format: str = "{:.4f}") -> str:
    """
    Render a DataFrame as an aligned plain-text table

    Args:
        df: pandas DataFrame
        float_format: format applied to float columns

    Returns:
        str: table text with a trailing newline
    """
    if df is None or df.empty:
        return "(empty)\n"

    return df.to_string(index=False, float_format=float_format.format, na_rep="-") + "\n"


def export_table_records(df: pd.DataFrame) -> list:
    """Convert a DataFrame to JSON-friendly records (NaN -> None)"""
    cleaned = df.astype(object).where(pd.notna(df), None)
    return cleaned.to_dict(orient="records")


def grid_to_json(grid: np.ndarray) -> dict:
    """
    Row-major JSON grid document; non-finite cells (obstacles) become null

    Args:
        grid: 2-D float array indexed [row, col]

    Returns:
        dict: {"width", "height", "values": [[...], ...]}
    """
    values = np.asarray(grid, dtype=np.float64)
    cells = values.astype(object)
    cells[~np.isfinite(values)] = None
    return {
        "width": int(values.shape[1]),
        "height": int(values.shape[0]),
        "values": cells.tolist(),
    }


def export_to_pgm(intensity: np.ndarray, comment: Optional[str] = None) -> bytes:
    """
    Encode an 8-bit grayscale image as binary PGM (P5)

    Args:
        intensity: uint8 array indexed [row, col]
        comment: optional single-line header comment

    Returns:
        bytes: PGM document
    """
    pixels = np.ascontiguousarray(intensity, dtype=np.uint8)
    height, width = pixels.shape
    header = "P5\n"
    if comment:
        header += "# " + comment.replace("\n", " ") + "\n"
    header += f"{width} {height}\n255\n"
    return header.encode("ascii") + pixels.tobytes()
