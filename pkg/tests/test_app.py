import orjson
import pytest

from app import main
from conftest import MAPS
from utils.semantic_map import load_map
from utils.semantic_sensor import PROMPT_PRESETS, Prompt, Provenance, SampleSet, cache_store

SITE = str(MAPS / "construction_site.json")
PLUMBING = str(MAPS / "plumbing_storage.json")


def _run(*args):
    return main([str(a) for a in args])


def _load(path):
    return orjson.loads(path.read_bytes())


def _mock_plan(out, *extra):
    return _run("plan", "--mock", "--seed", 7, "--R", 500, "--map", SITE, "--out", out, *extra)


class TestSample:
    def test_mock_sampling_is_reproducible(self, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        assert _run("sample", "--mock", "--seed", 7, "--k", 16, "--map", SITE, "--cache", first) == 0
        assert _run("sample", "--mock", "--seed", 7, "--k", 16, "--map", SITE, "--cache", second) == 0
        assert first.read_bytes() == second.read_bytes()

        document = _load(first)
        assert document["k"] == 16
        assert all(len(values) == 16 for values in document["per_class"].values())

    def test_default_cache_location(self, tmp_path):
        assert _run("sample", "--mock", "--k", 4, "--map", SITE, "--out", tmp_path) == 0
        assert (tmp_path / "samples.json").exists()

    def test_missing_api_key(self, tmp_path, no_api_key):
        code = _run("sample", "--map", SITE, "--out", tmp_path)
        assert code == 3


class TestPlan:
    def test_mock_plan_is_byte_identical(self, tmp_path):
        names = ["plan.json", "metrics.json", "metrics.txt", "posterior.json", "field.json", "overlay.svg"]
        assert _mock_plan(tmp_path) == 0
        first = {name: (tmp_path / name).read_bytes() for name in names}
        assert _mock_plan(tmp_path) == 0
        assert {name: (tmp_path / name).read_bytes() for name in names} == first

    def test_artifacts_embed_the_config(self, tmp_path):
        assert _mock_plan(tmp_path) == 0
        for name in ("plan.json", "metrics.json", "posterior.json", "field.json"):
            config = _load(tmp_path / name)["config"]
            assert config["seed"] == 7
            assert config["bootstrap"]["R"] == 500
            assert config["mode"] == "mock"
        assert b"seed" in (tmp_path / "overlay.svg").read_bytes()

    def test_plan_document_layout(self, tmp_path):
        assert _mock_plan(tmp_path) == 0
        document = _load(tmp_path / "plan.json")
        assert document["method"] == "ours"
        assert document["plan"]["status"] == "found"
        assert set(document["baselines"]) == {"astar", "fixed_cost"}
        methods = [row["method"] for row in _load(tmp_path / "metrics.json")["metrics"]]
        assert methods == ["astar", "ours", "fixed_cost"]

    def test_zero_gamma_equals_astar_baseline(self, tmp_path):
        assert _mock_plan(tmp_path / "zero", "--gamma", 0) == 0
        assert _mock_plan(tmp_path / "base", "--baseline", "astar") == 0
        zero = _load(tmp_path / "zero" / "plan.json")["plan"]
        base = _load(tmp_path / "base" / "plan.json")["plan"]
        assert zero == base

    def test_bad_map_path(self, tmp_path):
        code = _run("plan", "--mock", "--map", tmp_path / "missing.json", "--out", tmp_path)
        assert code == 4

    def test_threshold_reports_no_feasible_path(self, tmp_path):
        assert _mock_plan(tmp_path, "--threshold", 0) == 2
        document = _load(tmp_path / "plan.json")
        assert document["threshold"]["exceeded"] is True
        assert document["threshold"]["semantic_cost"] > 0

    def test_generous_threshold_passes(self, tmp_path):
        assert _mock_plan(tmp_path, "--threshold", 1e6) == 0

    def test_plumbing_map(self, tmp_path):
        code = _run(
            "plan", "--mock", "--R", 300, "--map", PLUMBING,
            "--prompt-preset", "plumbing_start", "--out", tmp_path,
        )
        assert code == 0

    def test_invalid_flag_value(self, tmp_path):
        assert _mock_plan(tmp_path, "--alpha", 1.5) == 4
        assert _mock_plan(tmp_path, "--w2", 0.5) == 4


class TestCachedReplay:
    def test_replay_matches_mock_run(self, tmp_path):
        cache = tmp_path / "samples.json"
        assert _run("sample", "--mock", "--seed", 7, "--map", SITE, "--cache", cache) == 0
        assert _mock_plan(tmp_path / "mock") == 0
        assert _run("plan", "--cache", cache, "--seed", 7, "--R", 500, "--map", SITE, "--out", tmp_path / "cached") == 0

        mocked = _load(tmp_path / "mock" / "plan.json")
        cached = _load(tmp_path / "cached" / "plan.json")
        assert cached["config"]["mode"] == "cached"
        assert cached["plan"] == mocked["plan"]

    def test_high_risk_cache_keeps_more_clearance(self, tmp_path):
        semantic_map = load_map(SITE)
        prompt = Prompt(text=PROMPT_PRESETS["busy"], class_names=semantic_map.class_names)
        sample_set = SampleSet(
            prompt_digest=prompt.digest,
            per_class={name: (0.8,) * 8 for name in semantic_map.class_names},
            k=8,
            temperature=1.0,
            provenance=Provenance.LIVE,
        )
        cache = cache_store(sample_set, tmp_path / "high_risk.json")

        assert _run("plan", "--cache", cache, "--R", 300, "--map", SITE, "--out", tmp_path / "ours") == 0
        rows = {row["method"]: row for row in _load(tmp_path / "ours" / "metrics.json")["metrics"]}
        assert rows["ours"]["min_dist"] > rows["astar"]["min_dist"]

    def test_cache_for_another_prompt_is_rejected(self, tmp_path):
        cache = tmp_path / "samples.json"
        assert _run("sample", "--mock", "--map", SITE, "--cache", cache) == 0
        code = _run("plan", "--cache", cache, "--prompt-preset", "empty", "--map", SITE, "--out", tmp_path)
        assert code == 3


class TestAblate:
    def test_three_rows_per_class(self, tmp_path):
        code = _run("ablate", "--mock", "--R", 200, "--runs", 3, "--ks", 1, 2, 4, "--map", SITE, "--out", tmp_path)
        assert code == 0
        rows = _load(tmp_path / "ablation.json")["ablation"]
        assert len(rows) == 3 * 4
        assert sorted({row["k"] for row in rows}) == [1, 2, 4]
        assert (tmp_path / "ablation.txt").exists()

    def test_mock_run_times_the_offline_transport(self, tmp_path):
        code = _run(
            "ablate", "--mock", "--R", 200, "--runs", 2, "--ks", 1, 4,
            "--synthetic-delay", 0.01, "--map", SITE, "--out", tmp_path,
        )
        assert code == 0
        document = _load(tmp_path / "ablation.json")
        latency = {row["k"]: row for row in document["latency"]}
        assert sorted(latency) == [1, 4]
        assert set(latency[1]) >= {"runs", "mean_s", "std_s", "mean_per_shot_s", "amortized_per_shot_s"}
        assert latency[4]["mean_per_shot_s"] >= 0.01
        assert document["config"]["sensor"]["synthetic_delay"] == 0.01

    def test_negative_synthetic_delay(self, tmp_path):
        code = _run("ablate", "--mock", "--synthetic-delay", -1, "--map", SITE, "--out", tmp_path)
        assert code == 4

    def test_empty_ks_is_usage_error(self, tmp_path):
        assert _run("ablate", "--mock", "--ks", "--map", SITE, "--out", tmp_path) == 4


class TestPosteriorAndRender:
    def test_posterior_command(self, tmp_path):
        assert _run("posterior", "--mock", "--R", 300, "--map", SITE, "--out", tmp_path) == 0
        document = _load(tmp_path / "posterior.json")
        assert list(document["posteriors"]) == ["workstation", "crane", "barrier", "forklift"]
        assert "Posterior CVaR" in (tmp_path / "posterior.txt").read_text()

    def test_render_saved_plan(self, tmp_path):
        assert _mock_plan(tmp_path / "run") == 0
        code = _run(
            "render", "--mock", "--map", SITE, "--out", tmp_path / "figure",
            "--posterior", tmp_path / "run" / "posterior.json",
            "--plan", tmp_path / "run" / "plan.json",
            "--cell-pixels", 2,
        )
        assert code == 0
        svg = (tmp_path / "figure" / "overlay.svg").read_text()
        assert svg.count("<polyline") == 3
        assert "plan:ours" in svg and "plan:astar" in svg

    def test_render_pgm(self, tmp_path):
        assert _run("render", "--mock", "--R", 200, "--map", SITE, "--out", tmp_path, "--format", "pgm") == 0
        assert (tmp_path / "overlay.pgm").read_bytes().startswith(b"P5")


@pytest.mark.parametrize("argv", [[], ["fly"], ["plan", "--k", "many"]])
def test_usage_errors(argv):
    assert main(argv) == 4
