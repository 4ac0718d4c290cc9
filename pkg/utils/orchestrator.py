"""
Planning Orchestrator - wires sensor, posterior, cost field, planner,
metrics and renderer into one pipeline driven by a RunConfig
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional

import pandas as pd

from utils.cost_field import CostField, build_cost_field, field_to_document, scale_lambdas
from utils.errors import NoPathError
from utils.eval_metrics import (
    AblationReport,
    MethodComparison,
    PathMetrics,
    ablate_shots,
    compare_methods,
    mock_sampler,
    path_metrics,
)
from utils.export import export_table_records, export_table_text, to_json_bytes
from utils.planner import PlanResult, astar
from utils.renderer import RenderSpec, default_path_colour, render_overlay
from utils.risk_posterior import PosteriorSummary, posterior_for_all_classes, posterior_table, posteriors_to_document
from utils.semantic_map import DistanceField, SemanticMap, all_distance_fields, load_map
from utils.semantic_sensor import (
    Prompt,
    SampleSet,
    SyntheticTransport,
    cache_load,
    measure_shot_latency,
    sample_llm,
    sample_mock,
)

logger = logging.getLogger(__name__)


@dataclass
class PlanRun:
    """Everything one plan invocation produced"""

    method: str
    sample_set: SampleSet
    posteriors: Dict[str, PosteriorSummary]
    field: CostField
    plan: PlanResult
    metrics: PathMetrics
    table: pd.DataFrame
    comparison: Optional[MethodComparison] = None
    threshold_exceeded: bool = False

    @property
    def semantic_cost(self) -> float:
        return self.plan.combined_cost - self.plan.geometric_length


@dataclass
class AblationRun:
    report: AblationReport
    latency: Optional[pd.DataFrame] = None


class PlanningOrchestrator:
    """Main pipeline orchestrator"""

    def __init__(self, config, transport=None):
        self.config = config
        self.transport = transport
        self.history: List[Dict[str, Any]] = []
        self._map: Optional[SemanticMap] = None
        self._fields: Optional[Dict[str, DistanceField]] = None

    @property
    def semantic_map(self) -> SemanticMap:
        if self._map is None:
            self._map = load_map(self.config.map_path)
        return self._map

    @property
    def fields(self) -> Dict[str, DistanceField]:
        if self._fields is None:
            self._fields = all_distance_fields(self.semantic_map)
        return self._fields

    @property
    def prompt(self) -> Prompt:
        return Prompt(text=self.config.prompt_text, class_names=self.semantic_map.class_names)

    def sample(self) -> SampleSet:
        """SampleSet from the configured source (live, mock or cached)"""
        mode = self.config.mode
        if mode == "mock":
            sample_set = sample_mock(
                self.config.seed,
                self.prompt,
                self.config.sensor.k,
                self.config.beta_params(self.semantic_map.class_names),
                temperature=self.config.sensor.temperature,
            )
        elif mode == "cached":
            sample_set = cache_load(self.config.cache_path, self.prompt)
        else:
            sample_set = sample_llm(self.config.sensor, self.prompt, self.transport)

        self._record("sample", mode=mode, k=sample_set.k)
        return sample_set

    def posteriors(self, sample_set: Optional[SampleSet] = None) -> Dict[str, PosteriorSummary]:
        sample_set = sample_set or self.sample()
        return posterior_for_all_classes(sample_set, self.config.bootstrap, self.semantic_map.class_names)

    def build_field(self, posteriors: Dict[str, PosteriorSummary]) -> CostField:
        lambdas = scale_lambdas(self.semantic_map.classes, posteriors)
        return build_cost_field(self.semantic_map, self.fields, lambdas, self.config.field)

    def run_plan(self, method: str = "ours", sample_set: Optional[SampleSet] = None) -> PlanRun:
        """
        Full pipeline: readings -> posterior -> field -> plan -> metrics

        Args:
            method: 'ours' (also runs both baselines) or 'astar' (gamma = 0 only)
            sample_set: readings to use instead of the configured source

        Returns:
            PlanRun
        """
        sample_set = sample_set or self.sample()
        posteriors = self.posteriors(sample_set)
        cost_field = self.build_field(posteriors)

        comparison = None
        if method == "astar":
            result = astar(self.semantic_map, cost_field, replace(self.config.planner, gamma=0.0))
            if not result.found:
                raise NoPathError("no_path", f"goal {self.semantic_map.goal} is unreachable")
            metrics = path_metrics(result.path, self.semantic_map, self.fields)
            table = pd.DataFrame([{
                "method": "astar",
                **metrics.to_record(),
                "combined_cost": result.combined_cost,
                "expansions_anchor": result.expansions["anchor"],
                "expansions_aux": result.expansions["aux"],
            }])
        else:
            comparison = compare_methods(
                self.semantic_map,
                posteriors,
                self.config.planner,
                field_config=self.config.field,
                fixed_cost_weight=self.config.fixed_cost_weight,
                fields=self.fields,
            )
            result = comparison.plans["ours"]
            metrics = comparison.metrics["ours"]
            table = comparison.to_frame()

        run = PlanRun(
            method=method,
            sample_set=sample_set,
            posteriors=posteriors,
            field=cost_field,
            plan=result,
            metrics=metrics,
            table=table,
            comparison=comparison,
        )
        run.threshold_exceeded = self._exceeds_threshold(run)
        self._record("plan", method=method, cost=result.combined_cost, length=result.geometric_length)
        return run

    def _exceeds_threshold(self, run: PlanRun) -> bool:
        threshold = self.config.threshold
        if threshold is None:
            return False
        exceeded = run.semantic_cost > threshold
        if exceeded:
            logger.warning(
                "repulsive cost %.4f exceeds threshold %.4f: no feasible path", run.semantic_cost, threshold
            )
        return exceeded

    def check_threshold(self, run: PlanRun) -> None:
        """Raise NoPathError('threshold_exceeded') when the run's repulsive cost is over the limit"""
        if run.threshold_exceeded:
            raise NoPathError(
                "threshold_exceeded",
                f"repulsive cost {run.semantic_cost:.4f} exceeds threshold {self.config.threshold}",
            )

    def run_ablation(self, ks: List[int], runs: int, latency: bool = True) -> AblationRun:
        """
        Shot-count ablation plus optional timing table

        In mock mode the sampler is the seeded Beta mock and latency is timed
        against a SyntheticTransport sleeping sensor.synthetic_delay per
        request; live mode samples and times the LLM. Cached runs skip timing.
        """
        prompt = self.prompt
        beta_params = self.config.beta_params(self.semantic_map.class_names)
        if self.config.mode == "live":
            def sampler(p, k, run):
                return sample_llm(replace(self.config.sensor, k=k), p, self.transport)
        else:
            sampler = mock_sampler(beta_params, self.config.seed)

        report = ablate_shots(prompt, ks, runs, sampler, self.config.bootstrap)
        timings = None
        transport = self.transport
        if transport is None and self.config.mode == "mock":
            transport = SyntheticTransport(
                self.semantic_map.class_names, beta_params, self.config.seed, self.config.sensor.synthetic_delay
            )
        if latency and (self.config.mode == "live" or transport is not None):
            timings = measure_shot_latency(self.config.sensor, prompt, ks, runs, transport)

        self._record("ablate", ks=list(ks), runs=runs)
        return AblationRun(report=report, latency=timings)

    def render(self, run: PlanRun, fmt: str = "svg", cell_pixels: int = 8) -> bytes:
        if run.comparison is not None:
            labelled = [(m, run.comparison.plans[m].path) for m in run.comparison.plans]
        else:
            labelled = [(run.method, run.plan.path)]
        spec = RenderSpec(
            field=run.field,
            map=self.semantic_map,
            paths=[(label, path, default_path_colour(i)) for i, (label, path) in enumerate(labelled)],
            cell_pixels=cell_pixels,
            title=self.config.prompt_text,
            metadata={"config": self.config.to_document()},
        )
        return render_overlay(spec, fmt)

    def plan_artifacts(self, run: PlanRun) -> Dict[str, bytes]:
        """Artifact file name -> bytes; every document embeds the resolved config"""
        config_doc = self.config.to_document()
        plan_doc = {"config": config_doc, "method": run.method, "plan": run.plan.to_document()}
        if run.comparison is not None:
            plan_doc["baselines"] = {
                m: p.to_document() for m, p in run.comparison.plans.items() if m != "ours"
            }
        if self.config.threshold is not None:
            plan_doc["threshold"] = {
                "limit": self.config.threshold,
                "semantic_cost": run.semantic_cost,
                "exceeded": run.threshold_exceeded,
            }

        metrics_doc = {"config": config_doc, "metrics": export_table_records(run.table)}
        field_doc = {"config": config_doc, **field_to_document(run.field)}
        return {
            "plan.json": to_json_bytes(plan_doc),
            "metrics.json": to_json_bytes(metrics_doc),
            "metrics.txt": export_table_text(run.table).encode("utf-8"),
            "posterior.json": to_json_bytes(posteriors_to_document(run.posteriors, config_doc)),
            "posterior.txt": export_table_text(posterior_table(run.posteriors), float_format="{:.3f}").encode("utf-8"),
            "field.json": to_json_bytes(field_doc),
            "field.pgm": self.render(run, fmt="pgm", cell_pixels=1),
            "overlay.svg": self.render(run, fmt="svg"),
        }

    def ablation_artifacts(self, ablation: AblationRun) -> Dict[str, bytes]:
        config_doc = self.config.to_document()
        frame = ablation.report.to_frame()
        document = {"config": config_doc, "ablation": export_table_records(frame)}
        text = export_table_text(frame)
        if ablation.latency is not None:
            document["latency"] = export_table_records(ablation.latency)
            text += "\n" + export_table_text(ablation.latency)
        return {"ablation.json": to_json_bytes(document), "ablation.txt": text.encode("utf-8")}

    def _record(self, step: str, **details):
        self.history.append({"step": step, **details})
