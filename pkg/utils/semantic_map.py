# File: utils/semantic_map.py
"""
Labeled planning environment and per-class Euclidean distance fields

Coordinates are (col, row) = (x, y) with the origin at the top-left cell.
Grids are numpy arrays indexed [row, col].
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Tuple, Union

import numpy as np
import orjson
from scipy import ndimage

from utils.errors import MapLoadError
from utils.validation import require_valid

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]


def _in_bounds(cell: Cell, width: int, height: int) -> bool:
    return 0 <= cell[0] < width and 0 <= cell[1] < height


@dataclass(frozen=True)
class ObstacleClass:
    """Named obstacle class with its cells and repulsion-strength prior"""

    name: str
    cells: FrozenSet[Cell]
    lambda_prior: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise MapLoadError("malformed", "class name must be non-empty")
        if not self.cells:
            raise MapLoadError("malformed", f"class '{self.name}' has no cells")
        if self.lambda_prior < 0:
            raise MapLoadError("malformed", f"class '{self.name}' has negative lambda_prior")


@dataclass(frozen=True)
class SemanticMap:
    width: int
    height: int
    classes: Tuple[ObstacleClass, ...]
    start: Cell
    goal: Cell

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise MapLoadError("malformed", "width and height must be positive")

        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise MapLoadError("duplicate_class", f"class names must be unique: {names}")

        owner: Dict[Cell, str] = {}
        for obstacle in self.classes:
            for cell in obstacle.cells:
                if not _in_bounds(cell, self.width, self.height):
                    raise MapLoadError(
                        "out_of_bounds", f"cell {cell} of class '{obstacle.name}' is outside the map"
                    )
                if cell in owner:
                    raise MapLoadError(
                        "overlapping_classes",
                        f"cell {cell} belongs to both '{owner[cell]}' and '{obstacle.name}'",
                    )
                owner[cell] = obstacle.name

        for label, cell in (("start", self.start), ("goal", self.goal)):
            if not _in_bounds(cell, self.width, self.height):
                raise MapLoadError("out_of_bounds", f"{label} {cell} is outside the map")
            if cell in owner:
                raise MapLoadError(
                    f"{label}_in_obstacle", f"{label} {cell} lies inside '{owner[cell]}'"
                )

    @property
    def class_names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def get_class(self, name: str) -> ObstacleClass:
        for obstacle in self.classes:
            if obstacle.name == name:
                return obstacle
        raise MapLoadError("unknown_class", f"no obstacle class named '{name}'")

    def class_mask(self, name: str) -> np.ndarray:
        """Boolean [row, col] mask of one class's cells"""
        mask = np.zeros((self.height, self.width), dtype=bool)
        cells = self.get_class(name).cells
        if cells:
            xs, ys = zip(*cells)
            mask[list(ys), list(xs)] = True
        return mask

    @cached_property
    def obstacle_mask(self) -> np.ndarray:
        mask = np.zeros((self.height, self.width), dtype=bool)
        for obstacle in self.classes:
            mask |= self.class_mask(obstacle.name)
        mask.setflags(write=False)
        return mask

    def is_free(self, cell: Cell) -> bool:
        return _in_bounds(cell, self.width, self.height) and not self.obstacle_mask[cell[1], cell[0]]

    def to_document(self) -> Dict[str, Any]:
        """Serialize back to the map document format (explicit sorted cells)"""
        return {
            "width": self.width,
            "height": self.height,
            "start": list(self.start),
            "goal": list(self.goal),
            "classes": [
                {
                    "name": c.name,
                    "lambda_prior": c.lambda_prior,
                    "cells": [list(cell) for cell in sorted(c.cells, key=lambda p: (p[1], p[0]))],
                }
                for c in self.classes
            ],
        }


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Per-class distance d_i(s) in cell units, indexed [row, col]"""

    class_name: str
    values: np.ndarray = field(repr=False)

    def at(self, cell: Cell) -> float:
        return float(self.values[cell[1], cell[0]])


def _as_int(value: Any, what: str) -> int:
    # the schema's "integer" also admits 2.0
    if isinstance(value, bool) or not isinstance(value, int):
        raise MapLoadError("malformed", f"{what} must be an integer, got {value!r}")
    return value


def _as_cell(raw: Iterable[Any], what: str) -> Cell:
    x, y = raw
    return (_as_int(x, what), _as_int(y, what))


def _expand_rect(rect: Iterable[int]) -> Iterable[Cell]:
    x0, y0, x1, y1 = (_as_int(v, "rectangle corner") for v in rect)
    if x1 < x0 or y1 < y0:
        raise MapLoadError("malformed", f"rectangle {list(rect)} has inverted corners")
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            yield (x, y)


def _read_document(source: Union[str, Path, Mapping[str, Any]]) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source

    path = Path(source)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise MapLoadError("io", f"cannot read map {path}: {e}") from e

    try:
        return orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise MapLoadError("malformed", f"map {path} is not valid JSON: {e}") from e


def load_map(source: Union[str, Path, Mapping[str, Any]]) -> SemanticMap:
    """
    Load and validate a map document

    Args:
        source: path to a JSON map document, or the parsed document itself

    Returns:
        SemanticMap: validated map with rectangles expanded to cells
    """
    document = _read_document(source)
    require_valid(document, "map", MapLoadError)

    width, height = _as_int(document["width"], "width"), _as_int(document["height"], "height")
    classes = []
    for entry in document["classes"]:
        cells = set()
        for raw_cell in entry.get("cells", []):
            cells.add(_as_cell(raw_cell, "obstacle cell"))
        for rect in entry.get("rects", []):
            cells.update(_expand_rect(rect))

        classes.append(
            ObstacleClass(
                name=entry["name"],
                cells=frozenset(cells),
                lambda_prior=float(entry.get("lambda_prior", 1.0)),
            )
        )

    semantic_map = SemanticMap(
        width=width,
        height=height,
        classes=tuple(classes),
        start=_as_cell(document["start"], "start"),
        goal=_as_cell(document["goal"], "goal"),
    )
    logger.info(
        "loaded %dx%d map with %d classes (%s)",
        width, height, len(classes), ", ".join(semantic_map.class_names),
    )
    return semantic_map


def distance_field(semantic_map: SemanticMap, class_name: str) -> DistanceField:
    """
    Exact Euclidean distance from every cell center to the class's nearest cell center

    Args:
        semantic_map: SemanticMap
        class_name: label of an existing class

    Returns:
        DistanceField: zero on the class's own cells
    """
    mask = semantic_map.class_mask(class_name)
    # edt measures the distance to the nearest zero entry, so obstacles are zeros
    values = ndimage.distance_transform_edt(~mask).astype(np.float64)
    values.setflags(write=False)
    return DistanceField(class_name=class_name, values=values)


def all_distance_fields(semantic_map: SemanticMap) -> Dict[str, DistanceField]:
    """Distance fields for every class, in map class order"""
    return {name: distance_field(semantic_map, name) for name in semantic_map.class_names}


def brute_force_distance(semantic_map: SemanticMap, class_name: str) -> np.ndarray:
    """O(N*M) reference distance grid, used as a test oracle"""
    cells = np.array(sorted(semantic_map.get_class(class_name).cells), dtype=np.float64)
    ys, xs = np.mgrid[0:semantic_map.height, 0:semantic_map.width]
    best = np.full((semantic_map.height, semantic_map.width), np.inf)
    for cx, cy in cells:
        best = np.minimum(best, np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2))
    return best


def min_clearance_at(
    semantic_map: SemanticMap,
    fields: Mapping[str, DistanceField],
    cell: Cell,
) -> float:
    """
    Clearance at a cell: minimum distance over all obstacle classes

    Returns math.inf on a map without obstacle classes.
    """
    if not _in_bounds(cell, semantic_map.width, semantic_map.height):
        raise MapLoadError("out_of_bounds", f"cell {cell} is outside the map")

    missing = [name for name in semantic_map.class_names if name not in fields]
    if missing:
        raise MapLoadError("unknown_class", f"missing distance fields for {missing}")

    return min((fields[name].at(cell) for name in semantic_map.class_names), default=math.inf)
