# File: utils/eval_metrics.py
"""
Path quality metrics, method comparison and the shot-count ablation
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.cost_field import CostFieldConfig, build_cost_field, scale_lambdas
from utils.errors import MetricsError, NoPathError
from utils.planner import PlannerConfig, PlanResult, astar, geometric_length, mhastar
from utils.risk_posterior import BootstrapConfig, PosteriorSummary, posterior_for_all_classes
from utils.semantic_map import Cell, DistanceField, SemanticMap, all_distance_fields
from utils.semantic_sensor import Prompt, SampleSet, sample_mock

logger = logging.getLogger(__name__)

METHODS = ("astar", "ours", "fixed_cost")

# Midpoint of the rating range, used as every class's weight in the fixed-cost baseline
FIXED_COST_WEIGHT = 0.5

Sampler = Callable[[Prompt, int, int], SampleSet]


@dataclass(frozen=True)
class PathMetrics:
    length: float
    min_dist: float
    avg_dist: float
    per_class_min: Dict[str, float]

    def to_record(self) -> dict:
        record = {"length": self.length, "min_dist": self.min_dist, "avg_dist": self.avg_dist}
        for name, value in self.per_class_min.items():
            record[f"min_{name}"] = value
        return record


def path_metrics(
    path: Sequence[Cell],
    semantic_map: SemanticMap,
    fields: Mapping[str, DistanceField],
) -> PathMetrics:
    """
    Length and clearance of a grid path

    Clearance is measured at path vertices: the distance from each vertex to
    the nearest obstacle cell of any class.

    Args:
        path: non-empty list of free (x, y) cells
        semantic_map: SemanticMap
        fields: label -> DistanceField

    Returns:
        PathMetrics
    """
    if not path:
        raise MetricsError("empty_path", "cannot score an empty path")
    for cell in path:
        if not semantic_map.is_free(cell):
            raise MetricsError("invalid_input", f"path cell {cell} is outside the map or blocked")

    names = semantic_map.class_names
    missing = [n for n in names if n not in fields]
    if missing:
        raise MetricsError("invalid_input", f"missing distance fields for {missing}")

    xs = np.array([c[0] for c in path])
    ys = np.array([c[1] for c in path])
    per_vertex = {name: np.asarray(fields[name].values)[ys, xs] for name in names}

    if names:
        clearance = np.min(np.stack([per_vertex[n] for n in names]), axis=0)
        min_dist = float(clearance.min())
        avg_dist = float(clearance.mean())
    else:
        min_dist = avg_dist = math.inf

    return PathMetrics(
        length=geometric_length(list(path)),
        min_dist=min_dist,
        avg_dist=avg_dist,
        per_class_min={name: float(per_vertex[name].min()) for name in names},
    )


@dataclass
class MethodComparison:
    plans: Dict[str, PlanResult]
    metrics: Dict[str, PathMetrics]
    lambdas: Dict[str, Dict[str, float]]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for method, metrics in self.metrics.items():
            plan = self.plans[method]
            rows.append({
                "method": method,
                **metrics.to_record(),
                "combined_cost": plan.combined_cost,
                "expansions_anchor": plan.expansions["anchor"],
                "expansions_aux": plan.expansions["aux"],
            })
        return pd.DataFrame(rows)


def fixed_cost_lambdas(semantic_map: SemanticMap, weight: float = FIXED_COST_WEIGHT) -> Dict[str, float]:
    """Prompt-independent lambdas: lambda_prior * constant weight"""
    return {c.name: c.lambda_prior * weight for c in semantic_map.classes}


def compare_methods(
    semantic_map: SemanticMap,
    posteriors: Mapping[str, PosteriorSummary],
    planner_config: PlannerConfig,
    field_config: Optional[CostFieldConfig] = None,
    fixed_cost_weight: float = FIXED_COST_WEIGHT,
    fields: Optional[Mapping[str, DistanceField]] = None,
) -> MethodComparison:
    """
    Run the A* baseline, the CVaR-scaled planner and the fixed-cost baseline

    Args:
        semantic_map: SemanticMap
        posteriors: label -> PosteriorSummary for the prompt
        planner_config: configuration of "ours"; the A* baseline uses gamma=0
            and the fixed-cost baseline the same gamma
        field_config: CostFieldConfig echoed into the fields
        fixed_cost_weight: constant per-class weight of the fixed-cost baseline
        fields: precomputed distance fields

    Returns:
        MethodComparison: one plan and one PathMetrics per method
    """
    fields = fields if fields is not None else all_distance_fields(semantic_map)
    field_config = field_config or CostFieldConfig(gamma=planner_config.gamma)

    ours_lambdas = scale_lambdas(semantic_map.classes, posteriors)
    fixed_lambdas = fixed_cost_lambdas(semantic_map, fixed_cost_weight)
    ours_field = build_cost_field(semantic_map, fields, ours_lambdas, field_config)
    fixed_field = build_cost_field(semantic_map, fields, fixed_lambdas, field_config)

    plans = {
        "astar": astar(semantic_map, ours_field, replace(planner_config, gamma=0.0)),
        "ours": mhastar(semantic_map, ours_field, planner_config),
        "fixed_cost": mhastar(semantic_map, fixed_field, planner_config),
    }

    for method, result in plans.items():
        if not result.found:
            raise NoPathError("no_path", f"{method}: goal {semantic_map.goal} is unreachable")

    metrics = {method: path_metrics(result.path, semantic_map, fields) for method, result in plans.items()}
    for method, m in metrics.items():
        logger.info("%s: length %.2f, min dist %.2f, avg dist %.2f", method, m.length, m.min_dist, m.avg_dist)

    return MethodComparison(
        plans=plans,
        metrics=metrics,
        lambdas={"astar": {n: 0.0 for n in ours_lambdas}, "ours": ours_lambdas, "fixed_cost": fixed_lambdas},
    )


@dataclass
class AblationReport:
    ks: Tuple[int, ...]
    runs: int
    per_k_cvar: Dict[int, Dict[str, List[float]]] = field(default_factory=dict)
    dispersion: Dict[int, Dict[str, Optional[float]]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for k in self.ks:
            for name, values in self.per_k_cvar[k].items():
                rows.append({
                    "k": k,
                    "class": name,
                    "runs": self.runs,
                    "mean_cvar": float(np.mean(values)),
                    "std_cvar": self.dispersion[k][name],
                })
        return pd.DataFrame(rows, columns=["k", "class", "runs", "mean_cvar", "std_cvar"])


def ablate_shots(
    prompt: Prompt,
    ks: Sequence[int],
    runs: int,
    sampler: Sampler,
    bootstrap_config: BootstrapConfig,
) -> AblationReport:
    """
    Posterior CVaR spread across repeated sampling, per shot count

    Args:
        prompt: Prompt
        ks: shot counts
        runs: independent SampleSets per shot count
        sampler: callable (prompt, k, run_index) -> SampleSet
        bootstrap_config: BootstrapConfig

    Returns:
        AblationReport: dispersion is the sample std over runs, None when runs == 1
    """
    if not ks:
        raise MetricsError("invalid_input", "ablation needs at least one shot count")
    if runs < 1:
        raise MetricsError("invalid_input", "ablation needs at least one run")

    report = AblationReport(ks=tuple(ks), runs=runs)
    for k in ks:
        values: Dict[str, List[float]] = {name: [] for name in prompt.class_names}
        for run in range(runs):
            posteriors = posterior_for_all_classes(sampler(prompt, k, run), bootstrap_config, prompt.class_names)
            for name, summary in posteriors.items():
                values[name].append(summary.cvar_alpha)

        report.per_k_cvar[k] = values
        report.dispersion[k] = {
            name: float(np.std(v, ddof=1)) if runs > 1 else None for name, v in values.items()
        }
        logger.info("k=%d: CVaR std %s", k, report.dispersion[k])

    return report


def mock_sampler(per_class_params: Mapping[str, Tuple[float, float]], seed: int = 7) -> Sampler:
    """Sampler drawing seeded Beta readings, one substream per (k, run)"""

    def sampler(prompt: Prompt, k: int, run: int) -> SampleSet:
        return sample_mock((seed, k, run), prompt, k, per_class_params)

    return sampler
