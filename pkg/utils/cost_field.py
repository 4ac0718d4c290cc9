# File: utils/cost_field.py
"""
Prompt-conditioned repulsive cost field

phi(s) = sum over classes of lambda_scaled * exp(-d_class(s)); obstacle
cells are hard-blocked with +inf. The semantic weight gamma is applied by
the planner, so one field serves a whole gamma sweep.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from utils.errors import CostFieldError
from utils.export import grid_to_json
from utils.semantic_map import DistanceField, ObstacleClass, SemanticMap

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


@dataclass(frozen=True)
class CostFieldConfig:
    gamma: float = 1.5
    alpha: float = 0.1

    def __post_init__(self):
        if self.gamma < 0:
            raise CostFieldError("negative_input", "gamma must be >= 0")


@dataclass(frozen=True, eq=False)
class CostField:
    """
    Cost grid plus the per-class data the auxiliary heuristic samples from

    phi is indexed [row, col]; distance_stack is (classes, rows, cols) in
    class order, aligned with lambdas.
    """

    phi: np.ndarray = field(repr=False)
    lambda_scaled: Dict[str, float]
    config: CostFieldConfig
    class_names: Tuple[str, ...] = ()
    distance_stack: np.ndarray = field(default=None, repr=False)
    lambdas: np.ndarray = field(default=None, repr=False)

    @property
    def height(self) -> int:
        return int(self.phi.shape[0])

    @property
    def width(self) -> int:
        return int(self.phi.shape[1])

    def at(self, cell) -> float:
        return float(self.phi[cell[1], cell[0]])

    @property
    def phi_max(self) -> float:
        finite = self.phi[np.isfinite(self.phi)]
        return float(finite.max()) if finite.size else 0.0


def phi_kernel(distance: Union[float, np.ndarray], lam: float) -> Union[float, np.ndarray]:
    """
    Exponential repulsive potential lam * exp(-distance)

    Args:
        distance: nonnegative distance in cell units (scalar or array)
        lam: nonnegative strength

    Returns:
        Same shape as distance
    """
    if lam < 0:
        raise CostFieldError("negative_input", f"lambda must be >= 0, got {lam}")
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d < 0):
        raise CostFieldError("negative_input", "distance must be >= 0")

    value = lam * np.exp(-d)
    return float(value) if value.ndim == 0 else value


def scale_lambdas(classes: Sequence[ObstacleClass], posteriors: Mapping) -> Dict[str, float]:
    """
    lambda_scaled = lambda_prior * posterior CVaR for every class

    Args:
        classes: ObstacleClass list (map order)
        posteriors: label -> PosteriorSummary

    Returns:
        dict: label -> lambda_scaled, in class order
    """
    scaled = {}
    for obstacle in classes:
        if obstacle.name not in posteriors:
            raise CostFieldError("missing_posterior", f"no posterior for class '{obstacle.name}'")
        scaled[obstacle.name] = obstacle.lambda_prior * float(posteriors[obstacle.name].cvar_alpha)
    return scaled


def build_cost_field(
    semantic_map: SemanticMap,
    fields: Mapping[str, DistanceField],
    lambdas: Mapping[str, float],
    config: CostFieldConfig,
) -> CostField:
    """
    Additive cost map over the grid

    Args:
        semantic_map: SemanticMap
        fields: label -> DistanceField for every class
        lambdas: label -> lambda_scaled for every class
        config: CostFieldConfig

    Returns:
        CostField: phi >= 0 on free cells, +inf on obstacle cells
    """
    shape = (semantic_map.height, semantic_map.width)
    names = semantic_map.class_names

    stack = np.zeros((len(names),) + shape, dtype=np.float64)
    strengths = np.zeros(len(names), dtype=np.float64)
    for i, name in enumerate(names):
        if name not in fields:
            raise CostFieldError("missing_field", f"no distance field for class '{name}'")
        if name not in lambdas:
            raise CostFieldError("missing_posterior", f"no lambda for class '{name}'")
        values = np.asarray(fields[name].values, dtype=np.float64)
        if values.shape != shape:
            raise CostFieldError(
                "shape_mismatch", f"distance field '{name}' is {values.shape}, map is {shape}"
            )
        stack[i] = values
        strengths[i] = float(lambdas[name])

    if np.any(strengths < 0):
        raise CostFieldError("negative_input", "lambda_scaled must be >= 0")

    phi = np.zeros(shape, dtype=np.float64)
    for i in range(len(names)):
        if strengths[i] > 0:
            phi += strengths[i] * np.exp(-stack[i])
    phi[semantic_map.obstacle_mask] = np.inf

    phi.setflags(write=False)
    stack.setflags(write=False)
    strengths.setflags(write=False)

    logger.info(
        "built cost field %dx%d, lambdas: %s",
        semantic_map.width, semantic_map.height,
        ", ".join(f"{n}={lambdas[n]:.3f}" for n in names),
    )
    return CostField(
        phi=phi,
        lambda_scaled={n: float(lambdas[n]) for n in names},
        config=config,
        class_names=names,
        distance_stack=stack,
        lambdas=strengths,
    )


def interpolate_distances(distance_stack: np.ndarray, point: Point) -> np.ndarray:
    """Bilinear interpolation of every class's distance at a continuous (x, y) point"""
    _, height, width = distance_stack.shape
    px = min(max(float(point[0]), 0.0), width - 1.0)
    py = min(max(float(point[1]), 0.0), height - 1.0)
    x0, y0 = int(math.floor(px)), int(math.floor(py))
    x1, y1 = min(x0 + 1, width - 1), min(y0 + 1, height - 1)
    fx, fy = px - x0, py - y0

    top = distance_stack[:, y0, x0] * (1 - fx) + distance_stack[:, y0, x1] * fx
    bottom = distance_stack[:, y1, x0] * (1 - fx) + distance_stack[:, y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def exact_phi_at(field: CostField, point: Point) -> float:
    """Sum of all class potentials at a continuous point"""
    d = interpolate_distances(field.distance_stack, point)
    return float(np.sum(field.lambdas * np.exp(-d)))


def nearest_dominant_phi(
    semantic_map: SemanticMap,
    fields: Mapping[str, DistanceField],
    lambdas: Mapping[str, float],
    cell: Point,
) -> float:
    """
    Potential of the nearest class only: lambda_nearest * exp(-delta)

    Args:
        semantic_map: SemanticMap
        fields: label -> DistanceField
        lambdas: label -> lambda_scaled
        cell: grid cell or continuous (x, y) point

    Returns:
        float: 0.0 on a map without classes
    """
    names = semantic_map.class_names
    if not names:
        return 0.0

    stack = np.stack([np.asarray(fields[n].values, dtype=np.float64) for n in names])
    d = interpolate_distances(stack, cell)
    # argmin keeps the first index on ties
    nearest = int(np.argmin(d))
    return float(lambdas[names[nearest]] * math.exp(-d[nearest]))


def field_to_document(field: CostField) -> dict:
    """JSON document for the renderer: phi grid (obstacles null) plus lambdas"""
    document = grid_to_json(field.phi)
    document["lambda_scaled"] = dict(field.lambda_scaled)
    document["gamma"] = field.config.gamma
    document["alpha"] = field.config.alpha
    return document
