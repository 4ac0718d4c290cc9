"""
Semantic Risk Planner - command-line entry point
Entry Point: python app.py {sample,posterior,plan,ablate,render} [options]

Exit codes: 0 success, 2 no feasible path (or cost threshold exceeded),
3 sensor/cache failure, 4 configuration/map/usage error, 1 anything else.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import orjson
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from config import RunConfig, load_run_config
from utils.errors import ConfigError, RiskPlannerError
from utils.export import export_table_text, write_bytes
from utils.orchestrator import PlanningOrchestrator
from utils.renderer import RenderSpec, default_path_colour, render_overlay
from utils.risk_posterior import export_posteriors, load_posteriors, posterior_table
from utils.semantic_sensor import PROMPT_PRESETS, cache_store

logger = logging.getLogger("app")

console = Console()

DEFAULT_KS = [1, 2, 4, 8, 16]


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; usage errors here map to 4"""

    def error(self, message):
        raise ConfigError("usage", message)


def setup_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run config file")
    common.add_argument("--map", help="map document (JSON)")
    common.add_argument("--prompt", help="natural-language instruction")
    common.add_argument("--prompt-preset", choices=sorted(PROMPT_PRESETS), help="use a shipped prompt")
    common.add_argument("--k", type=int, help="sensor shots per prompt")
    common.add_argument("--R", type=int, help="bootstrap resamples")
    common.add_argument("--alpha", type=float, help="CVaR level in (0, 1)")
    common.add_argument("--gamma", type=float, help="semantic cost weight")
    common.add_argument("--seed", type=int, help="seed for mock sampling and the bootstrap")
    common.add_argument("--mock", action="store_true", help="seeded Beta readings instead of the LLM")
    common.add_argument("--cache", help="sample cache file (written by 'sample', replayed otherwise)")
    common.add_argument("--w1", type=float, help="heuristic inflation")
    common.add_argument("--w2", type=float, help="anchor suboptimality bound")
    common.add_argument("--delta-ell", type=float, help="auxiliary heuristic sampling step")
    common.add_argument("--threshold", type=float, help="max repulsive cost before reporting no feasible path")
    common.add_argument("--out", help="output directory")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = _Parser(prog="app.py", description="Prompt-conditioned risk-aware grid planning")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("sample", parents=[common], help="draw sensor readings and write a cache file")
    sub.add_parser("posterior", parents=[common], help="bootstrap posterior and CVaR table")

    plan = sub.add_parser("plan", parents=[common], help="full pipeline: posterior, field, plan, metrics, figure")
    plan.add_argument("--baseline", choices=["astar"], help="run only the gamma=0 A* baseline")

    ablate = sub.add_parser("ablate", parents=[common], help="CVaR spread and latency versus shot count")
    ablate.add_argument("--ks", type=int, nargs="*", default=DEFAULT_KS, help="shot counts")
    ablate.add_argument("--runs", type=int, default=10, help="repetitions per shot count")
    ablate.add_argument(
        "--synthetic-delay", type=float, help="seconds per request of the offline transport timed in mock mode"
    )

    render = sub.add_parser("render", parents=[common], help="re-render a field with saved plans")
    render.add_argument("--posterior", help="posterior.json to build the field from (skips sampling)")
    render.add_argument("--plan", nargs="*", default=[], help="plan.json files to overlay")
    render.add_argument("--format", choices=["svg", "pgm"], default="svg")
    render.add_argument("--cell-pixels", type=int, default=8)

    return parser


def resolve_config(args) -> RunConfig:
    prompt = args.prompt
    if prompt is None and args.prompt_preset:
        prompt = PROMPT_PRESETS[args.prompt_preset]

    overrides: Dict[str, Any] = {
        "map_path": args.map,
        "prompt_text": prompt,
        "seed": args.seed,
        "outputs": args.out,
        "threshold": args.threshold,
        "sensor": {"k": args.k, "synthetic_delay": getattr(args, "synthetic_delay", None)},
        "bootstrap": {"R": args.R, "alpha": args.alpha, "seed": args.seed},
        "planner": {"gamma": args.gamma, "w1": args.w1, "w2": args.w2, "delta_ell": args.delta_ell},
    }
    if args.mock:
        overrides["mode"] = "mock"
    elif args.cache and args.command != "sample":
        overrides["mode"] = "cached"
        overrides["cache_path"] = args.cache

    return load_run_config(args.config, overrides)


def print_frame(df: pd.DataFrame, title: str, digits: int = 4):
    table = Table(title=title)
    for column in df.columns:
        table.add_column(str(column), justify="left" if df[column].dtype == object else "right")
    for row in df.itertuples(index=False):
        cells = []
        for value in row:
            if isinstance(value, float):
                cells.append("-" if pd.isna(value) else f"{value:.{digits}f}")
            else:
                cells.append(str(value))
        table.add_row(*cells)
    console.print(table)


def write_artifacts(out_dir: Path, artifacts: Dict[str, bytes]):
    for name, data in artifacts.items():
        write_bytes(out_dir / name, data)
    logger.info("wrote %s to %s", ", ".join(sorted(artifacts)), out_dir)


def cmd_sample(args, config: RunConfig) -> int:
    orchestrator = PlanningOrchestrator(config)
    sample_set = orchestrator.sample()
    target = Path(args.cache) if args.cache else Path(config.outputs) / "samples.json"
    cache_store(sample_set, target)

    readings = pd.DataFrame({name: list(values) for name, values in sample_set.per_class.items()})
    print_frame(readings, f"Sensor readings (k={sample_set.k}, {sample_set.provenance.value})", digits=3)
    logger.info("sample cache written to %s", target)
    return 0


def cmd_posterior(args, config: RunConfig) -> int:
    orchestrator = PlanningOrchestrator(config)
    posteriors = orchestrator.posteriors()
    out_dir = Path(config.outputs)
    export_posteriors(posteriors, out_dir / "posterior.json", config.to_document())
    table = posterior_table(posteriors)
    write_bytes(out_dir / "posterior.txt", export_table_text(table, float_format="{:.3f}").encode("utf-8"))
    print_frame(table, f"Posterior (alpha={config.bootstrap.alpha})", digits=3)
    return 0


def cmd_plan(args, config: RunConfig) -> int:
    orchestrator = PlanningOrchestrator(config)
    method = "astar" if args.baseline == "astar" else "ours"
    run = orchestrator.run_plan(method)
    write_artifacts(Path(config.outputs), orchestrator.plan_artifacts(run))

    print_frame(posterior_table(run.posteriors), f"Posterior (alpha={config.bootstrap.alpha})", digits=3)
    print_frame(run.table, "Path metrics", digits=2)

    # artifacts are written before the feasibility verdict so the diagnostics survive
    orchestrator.check_threshold(run)
    return 0


def cmd_ablate(args, config: RunConfig) -> int:
    if not args.ks:
        raise ConfigError("usage", "--ks needs at least one shot count")
    if args.runs < 1:
        raise ConfigError("usage", "--runs must be >= 1")

    orchestrator = PlanningOrchestrator(config)
    ablation = orchestrator.run_ablation(args.ks, args.runs)
    write_artifacts(Path(config.outputs), orchestrator.ablation_artifacts(ablation))

    print_frame(ablation.report.to_frame(), "Posterior CVaR vs. number of shots")
    if ablation.latency is not None:
        print_frame(ablation.latency, "Sampling time vs. number of shots")
    return 0


def _saved_paths(plan_files: List[str]) -> List[tuple]:
    labelled = []
    for plan_file in plan_files:
        try:
            document = orjson.loads(Path(plan_file).read_bytes())
        except (OSError, orjson.JSONDecodeError) as e:
            raise ConfigError("io", f"cannot read plan {plan_file}: {e}") from e

        stem = Path(plan_file).stem
        labelled.append((f"{stem}:{document.get('method', 'plan')}", document["plan"]["path"]))
        for method, baseline in sorted(document.get("baselines", {}).items()):
            labelled.append((f"{stem}:{method}", baseline["path"]))
    return [(label, [tuple(c) for c in path]) for label, path in labelled]


def cmd_render(args, config: RunConfig) -> int:
    orchestrator = PlanningOrchestrator(config)
    if args.posterior:
        posteriors = load_posteriors(args.posterior)
    else:
        posteriors = orchestrator.posteriors()
    cost_field = orchestrator.build_field(posteriors)

    spec = RenderSpec(
        field=cost_field,
        map=orchestrator.semantic_map,
        paths=[
            (label, path, default_path_colour(i))
            for i, (label, path) in enumerate(_saved_paths(args.plan))
        ],
        cell_pixels=args.cell_pixels,
        title=config.prompt_text,
        metadata={"config": config.to_document()},
    )
    target = Path(config.outputs) / f"overlay.{args.format}"
    write_bytes(target, render_overlay(spec, args.format))
    logger.info("rendered %s", target)
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "posterior": cmd_posterior,
    "plan": cmd_plan,
    "ablate": cmd_ablate,
    "render": cmd_render,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.verbose)
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except RiskPlannerError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except Exception:
        logger.exception("unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
