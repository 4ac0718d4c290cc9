# File: utils/planner.py
"""
Grid search over the combined cost c(s, s') = step(s, s') + gamma * phi(s')

Three entry points share one search loop:
    astar            single anchor queue, Euclidean heuristic
    dijkstra_oracle  single queue, zero heuristic (ground truth)
    mhastar          shared-open multi-heuristic search: the Euclidean
                     anchor plus an auxiliary queue keyed with a line
                     integral of the potential towards the goal
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numba import njit

from utils.cost_field import CostField
from utils.errors import PlanningError
from utils.semantic_map import Cell, SemanticMap

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

_MOVES_4 = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0))
_MOVES_8 = _MOVES_4 + ((1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))

AUX_PHI_MODES = ("exact_sum", "nearest_dominant")


class PlanStatus(str, Enum):
    FOUND = "found"
    NO_PATH = "no_path"


@dataclass(frozen=True)
class PlannerConfig:
    gamma: float = 1.5
    connectivity: int = 8
    w1: float = 1.0
    w2: float = 1.0
    delta_ell: float = 0.5
    aux_phi_mode: str = "exact_sum"

    def __post_init__(self):
        if self.gamma < 0:
            raise PlanningError("invalid_config", "gamma must be >= 0")
        if self.connectivity not in (4, 8):
            raise PlanningError("invalid_config", f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.w1 < 1 or self.w2 < 1:
            raise PlanningError("invalid_config", "w1 and w2 must be >= 1")
        if self.delta_ell <= 0:
            raise PlanningError("invalid_config", "delta_ell must be > 0")
        if self.aux_phi_mode not in AUX_PHI_MODES:
            raise PlanningError("invalid_config", f"unknown aux_phi_mode '{self.aux_phi_mode}'")


@dataclass
class PlanResult:
    path: List[Cell]
    combined_cost: float
    geometric_length: float
    expansions: Dict[str, int] = field(default_factory=lambda: {"anchor": 0, "aux": 0})
    status: PlanStatus = PlanStatus.FOUND

    @property
    def found(self) -> bool:
        return self.status == PlanStatus.FOUND

    def to_document(self) -> dict:
        return {
            "path": [list(cell) for cell in self.path],
            "combined_cost": self.combined_cost if self.found else None,
            "geometric_length": self.geometric_length if self.found else None,
            "expansions": dict(self.expansions),
            "status": self.status.value,
        }


def _moves(connectivity: int):
    return _MOVES_8 if connectivity == 8 else _MOVES_4


def _check_field(semantic_map: SemanticMap, cost_field: CostField):
    if cost_field.phi.shape != (semantic_map.height, semantic_map.width):
        raise PlanningError(
            "shape_mismatch",
            f"cost field is {cost_field.phi.shape}, map is {(semantic_map.height, semantic_map.width)}",
        )


def edge_cost(from_cell: Cell, to_cell: Cell, cost_field: CostField, config: PlannerConfig) -> float:
    """
    Combined cost of one move

    Args:
        from_cell: (x, y)
        to_cell: (x, y), adjacent under config.connectivity
        cost_field: CostField (obstacles are +inf)
        config: PlannerConfig

    Returns:
        float: Euclidean step + gamma * phi(to_cell)
    """
    dx, dy = to_cell[0] - from_cell[0], to_cell[1] - from_cell[1]
    adjacent = (abs(dx) + abs(dy) == 1) or (
        config.connectivity == 8 and abs(dx) == 1 and abs(dy) == 1
    )
    if not adjacent:
        raise PlanningError("not_adjacent", f"{from_cell} and {to_cell} are not neighbors")

    for cell in (from_cell, to_cell):
        if not (0 <= cell[0] < cost_field.width and 0 <= cell[1] < cost_field.height):
            raise PlanningError("out_of_bounds", f"cell {cell} is outside the field")

    phi_to = cost_field.at(to_cell)
    if math.isinf(phi_to):
        raise PlanningError("obstacle_target", f"cell {to_cell} is an obstacle")

    if dx and dy:
        if math.isinf(cost_field.at((from_cell[0] + dx, from_cell[1]))) or math.isinf(
            cost_field.at((from_cell[0], from_cell[1] + dy))
        ):
            raise PlanningError("obstacle_target", f"move {from_cell} -> {to_cell} cuts an obstacle corner")

    step = SQRT2 if dx and dy else 1.0
    return step + config.gamma * phi_to


def anchor_heuristic(cell: Cell, goal: Cell) -> float:
    """Straight-line distance to the goal in cell units"""
    return math.hypot(goal[0] - cell[0], goal[1] - cell[1])


@njit(cache=False)
def _line_integral(distance_stack, lambdas, sx, sy, gx, gy, delta_ell, nearest_only):
    dx = gx - sx
    dy = gy - sy
    dist = math.sqrt(dx * dx + dy * dy)
    if dist == 0.0:
        return 0.0

    n_classes, height, width = distance_stack.shape
    samples = int(math.ceil(dist / delta_ell))
    total = 0.0
    for step in range(1, samples + 1):
        t = step / samples
        px = min(max(sx + t * dx, 0.0), width - 1.0)
        py = min(max(sy + t * dy, 0.0), height - 1.0)
        x0 = int(math.floor(px))
        y0 = int(math.floor(py))
        x1 = min(x0 + 1, width - 1)
        y1 = min(y0 + 1, height - 1)
        fx = px - x0
        fy = py - y0

        phi = 0.0
        best_d = np.inf
        best_lam = 0.0
        for c in range(n_classes):
            top = distance_stack[c, y0, x0] * (1.0 - fx) + distance_stack[c, y0, x1] * fx
            bottom = distance_stack[c, y1, x0] * (1.0 - fx) + distance_stack[c, y1, x1] * fx
            d = top * (1.0 - fy) + bottom * fy
            if nearest_only:
                if d < best_d:
                    best_d = d
                    best_lam = lambdas[c]
            else:
                phi += lambdas[c] * math.exp(-d)
        if nearest_only and n_classes > 0:
            phi = best_lam * math.exp(-best_d)
        total += phi

    return total * delta_ell


def aux_heuristic(cell: Cell, goal: Cell, cost_field: CostField, config: PlannerConfig) -> float:
    """
    Riemann sum of gamma * phi along the segment from cell to goal

    Args:
        cell: (x, y)
        goal: (x, y)
        cost_field: CostField with distance_stack and lambdas
        config: PlannerConfig (gamma, delta_ell, aux_phi_mode)

    Returns:
        float: 0 at the goal or when gamma is 0
    """
    if config.gamma == 0 or cell == goal:
        return 0.0
    integral = _line_integral(
        cost_field.distance_stack,
        cost_field.lambdas,
        float(cell[0]), float(cell[1]),
        float(goal[0]), float(goal[1]),
        float(config.delta_ell),
        config.aux_phi_mode == "nearest_dominant",
    )
    return config.gamma * integral


def geometric_length(path: List[Cell]) -> float:
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])))


def path_cost(path: List[Cell], cost_field: CostField, config: PlannerConfig) -> float:
    """Sum of edge costs along a path (raises on invalid moves)"""
    return float(sum(edge_cost(a, b, cost_field, config) for a, b in zip(path, path[1:])))


def _search(
    semantic_map: SemanticMap,
    cost_field: CostField,
    config: PlannerConfig,
    anchor: Callable[[int, int], float],
    use_aux: bool,
) -> PlanResult:
    """
    Shared-open search loop

    Heap entries are (key, -g, x, y): ties prefer larger g, then the
    lexicographically smaller cell. Outdated entries are skipped on pop.
    """
    _check_field(semantic_map, cost_field)
    width, height = semantic_map.width, semantic_map.height
    n = width * height
    phi = cost_field.phi.ravel().tolist()
    blocked = np.isinf(cost_field.phi).ravel().tolist()
    moves = _moves(config.connectivity)
    gamma, w1, w2 = config.gamma, config.w1, config.w2

    start, goal = semantic_map.start, semantic_map.goal
    start_i = start[1] * width + start[0]
    goal_i = goal[1] * width + goal[0]

    g = [math.inf] * n
    parent = [-1] * n
    g[start_i] = 0.0

    keys = [[None] * n, [None] * n]
    heaps: List[list] = [[], []]
    closed_anchor = bytearray(n)
    closed_aux = bytearray(n)
    aux_cache = [-1.0] * n
    expansions = [0, 0]

    def h_aux(i: int, x: int, y: int) -> float:
        value = aux_cache[i]
        if value < 0:
            value = aux_heuristic((x, y), goal, cost_field, config)
            aux_cache[i] = value
        return value

    def push(q: int, i: int, x: int, y: int, key: float):
        keys[q][i] = key
        heapq.heappush(heaps[q], (key, -g[i], x, y))

    def peek(q: int):
        heap, current = heaps[q], keys[q]
        while heap:
            entry = heap[0]
            if current[entry[3] * width + entry[2]] == entry[0]:
                return entry
            heapq.heappop(heap)
        return None

    def insert(i: int, x: int, y: int):
        h0 = anchor(x, y)
        push(0, i, x, y, g[i] + w1 * h0)
        if use_aux and not closed_aux[i]:
            push(1, i, x, y, g[i] + w1 * (h0 + h_aux(i, x, y)))

    def expand(q: int):
        _, _, x, y = heapq.heappop(heaps[q])
        i = y * width + x
        keys[0][i] = None
        keys[1][i] = None
        expansions[q] += 1
        if q == 0:
            closed_anchor[i] = 1
        else:
            closed_aux[i] = 1

        gi = g[i]
        for dx, dy, step in moves:
            nx, ny = x + dx, y + dy
            if nx < 0 or ny < 0 or nx >= width or ny >= height:
                continue
            ni = ny * width + nx
            if blocked[ni]:
                continue
            if dx and dy and (blocked[y * width + nx] or blocked[ny * width + x]):
                continue
            ng = gi + step + gamma * phi[ni]
            if ng < g[ni]:
                g[ni] = ng
                parent[ni] = i
                if not closed_anchor[ni]:
                    insert(ni, nx, ny)

    insert(start_i, start[0], start[1])
    while True:
        top0 = peek(0)
        if top0 is None:
            break
        top1 = peek(1) if use_aux else None
        if top1 is not None and top1[0] <= w2 * top0[0]:
            if g[goal_i] <= top1[0]:
                break
            expand(1)
        else:
            if g[goal_i] <= top0[0]:
                break
            expand(0)

    counts = {"anchor": expansions[0], "aux": expansions[1]}
    if math.isinf(g[goal_i]):
        logger.info("no path from %s to %s after %s expansions", start, goal, counts)
        return PlanResult(
            path=[], combined_cost=math.inf, geometric_length=math.inf,
            expansions=counts, status=PlanStatus.NO_PATH,
        )

    path = []
    i = goal_i
    while i != -1:
        path.append((i % width, i // width))
        i = parent[i]
    path.reverse()

    result = PlanResult(
        path=path,
        combined_cost=path_cost(path, cost_field, config),
        geometric_length=geometric_length(path),
        expansions=counts,
        status=PlanStatus.FOUND,
    )
    logger.debug(
        "path of %d cells, cost %.4f, expansions %s", len(path), result.combined_cost, counts
    )
    return result


def _euclidean_to(goal: Cell) -> Callable[[int, int], float]:
    gx, gy = goal
    return lambda x, y: math.hypot(gx - x, gy - y)


def astar(semantic_map: SemanticMap, cost_field: CostField, config: PlannerConfig) -> PlanResult:
    """Single-queue A* with the Euclidean anchor heuristic"""
    return _search(semantic_map, cost_field, config, _euclidean_to(semantic_map.goal), use_aux=False)


def dijkstra_oracle(semantic_map: SemanticMap, cost_field: CostField, config: PlannerConfig) -> PlanResult:
    """Uniform-cost search; ground-truth optimal combined cost"""
    return _search(semantic_map, cost_field, config, lambda x, y: 0.0, use_aux=False)


def mhastar(semantic_map: SemanticMap, cost_field: CostField, config: PlannerConfig) -> PlanResult:
    """
    Shared-open multi-heuristic A*

    The auxiliary queue is expanded while its min key stays within w2 times
    the anchor's min key, so the returned cost is at most w1 * w2 times the
    optimum. With gamma = 0 the potential vanishes and only the anchor runs.

    Args:
        semantic_map: SemanticMap (start, goal)
        cost_field: CostField
        config: PlannerConfig

    Returns:
        PlanResult: status no_path when the goal is unreachable
    """
    use_aux = config.gamma > 0 and len(cost_field.class_names) > 0
    return _search(semantic_map, cost_field, config, _euclidean_to(semantic_map.goal), use_aux=use_aux)


PLANNERS: Dict[str, Callable[[SemanticMap, CostField, PlannerConfig], PlanResult]] = {
    "astar": astar,
    "mhastar": mhastar,
    "dijkstra": dijkstra_oracle,
}


def plan(
    semantic_map: SemanticMap,
    cost_field: CostField,
    config: PlannerConfig,
    method: str = "mhastar",
) -> PlanResult:
    if method not in PLANNERS:
        raise PlanningError("invalid_config", f"unknown planner '{method}'")
    logger.info("planning with %s (gamma=%.2f, w1=%.2f, w2=%.2f)", method, config.gamma, config.w1, config.w2)
    return PLANNERS[method](semantic_map, cost_field, config)
