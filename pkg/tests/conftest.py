import math
import threading
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from utils.cost_field import CostFieldConfig, build_cost_field
from utils.semantic_map import ObstacleClass, SemanticMap, all_distance_fields, load_map

ROOT = Path(__file__).resolve().parent.parent
MAPS = ROOT / "maps"

# Posterior CVaR vectors in construction-site class order
# (workstation, crane, barrier, forklift)
CVAR_BUSY = (0.600, 0.720, 0.437, 0.741)
CVAR_EMPTY = (0.259, 0.365, 0.332, 0.376)
CVAR_FORKLIFT_OFF = (0.776, 0.626, 0.440, 0.177)


@pytest.fixture(scope="session")
def construction_map():
    return load_map(MAPS / "construction_site.json")


@pytest.fixture(scope="session")
def plumbing_map():
    return load_map(MAPS / "plumbing_storage.json")


@pytest.fixture(scope="session")
def construction_fields(construction_map):
    return all_distance_fields(construction_map)


def rect_cells(x0, y0, x1, y1):
    return frozenset((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))


def make_map(width, height, start, goal, classes):
    """classes: list of (name, cells) or (name, cells, lambda_prior)"""
    obstacles = tuple(
        ObstacleClass(name=c[0], cells=frozenset(c[1]), lambda_prior=c[2] if len(c) > 2 else 1.0)
        for c in classes
    )
    return SemanticMap(width=width, height=height, classes=obstacles, start=start, goal=goal)


def random_map(seed, width=20, height=20, max_classes=5, density=0.25):
    """Random obstacle cells split over 1..max_classes classes; start and goal always free"""
    rng = np.random.default_rng(seed)
    n_classes = int(rng.integers(1, max_classes + 1))

    free_cells = [(x, y) for y in range(height) for x in range(width)]
    picks = rng.choice(len(free_cells), size=2, replace=False)
    start, goal = free_cells[picks[0]], free_cells[picks[1]]

    blocked = rng.random((height, width)) < density
    owner = rng.integers(0, n_classes, size=(height, width))
    blocked[start[1], start[0]] = False
    blocked[goal[1], goal[0]] = False

    classes = []
    for i in range(n_classes):
        ys, xs = np.nonzero(blocked & (owner == i))
        cells = frozenset(zip(xs.tolist(), ys.tolist()))
        if cells:
            classes.append((f"class_{i}", cells))
    return make_map(width, height, start, goal, classes)


def large_map():
    """512x512, four rectangular classes well away from the start-goal row"""
    return make_map(
        512, 512, (5, 256), (506, 256),
        [
            ("workstation", rect_cells(100, 0, 200, 100)),
            ("crane", rect_cells(250, 400, 350, 511)),
            ("barrier", rect_cells(350, 50, 450, 150)),
            ("forklift", rect_cells(50, 380, 120, 480)),
        ],
    )


def field_for(semantic_map, lambdas, gamma=1.5):
    """Cost field with explicit lambda_scaled values (dict, sequence or one float for all)"""
    names = semantic_map.class_names
    if isinstance(lambdas, (int, float)):
        lambdas = {n: float(lambdas) for n in names}
    elif not isinstance(lambdas, dict):
        lambdas = dict(zip(names, lambdas))
    return build_cost_field(
        semantic_map, all_distance_fields(semantic_map), lambdas, CostFieldConfig(gamma=gamma)
    )


def injected_posteriors(semantic_map, cvars):
    """Stand-in posteriors carrying only the CVaR the cost field reads"""
    if isinstance(cvars, (int, float)):
        cvars = [cvars] * len(semantic_map.class_names)
    return {n: SimpleNamespace(cvar_alpha=float(v)) for n, v in zip(semantic_map.class_names, cvars)}


def anchor_violations(semantic_map, cost_field, config):
    """Count edges where h0(s) > c(s, s') + h0(s')"""
    from utils.planner import anchor_heuristic, edge_cost
    from utils.errors import PlanningError

    goal = semantic_map.goal
    violations = 0
    moves = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    for y in range(semantic_map.height):
        for x in range(semantic_map.width):
            if not semantic_map.is_free((x, y)):
                continue
            for dx, dy in moves:
                target = (x + dx, y + dy)
                try:
                    cost = edge_cost((x, y), target, cost_field, config)
                except PlanningError:
                    continue
                if anchor_heuristic((x, y), goal) > cost + anchor_heuristic(target, goal) + 1e-12:
                    violations += 1
    return violations


class ScriptedTransport:
    """Replays completion contents in order; thread-safe, records every call"""

    def __init__(self, contents, errors=None):
        self.contents = list(contents)
        self.errors = dict(errors or {})
        self.calls = []
        self._lock = threading.Lock()

    def complete(self, messages, n=1):
        with self._lock:
            index = len(self.calls)
            self.calls.append(n)
            if index in self.errors:
                raise self.errors[index]
            batch = self.contents[:n]
            del self.contents[:n]
        return batch


@pytest.fixture
def scripted_transport():
    return ScriptedTransport


@pytest.fixture
def no_api_key(monkeypatch, mocker):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    mocker.patch("utils.semantic_sensor.load_dotenv")


def is_neighbor_path(path, connectivity=8):
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        dx, dy = abs(ax - bx), abs(ay - by)
        if connectivity == 4 and dx + dy != 1:
            return False
        if connectivity == 8 and (max(dx, dy) != 1):
            return False
    return True


def euclid(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])
