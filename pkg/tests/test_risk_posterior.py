import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from utils.errors import PosteriorError
from utils.risk_posterior import (
    BootstrapConfig,
    bootstrap_posterior,
    cvar,
    dirichlet_weights,
    export_posteriors,
    load_posteriors,
    posterior_for_all_classes,
    posterior_table,
)
from utils.semantic_sensor import Provenance, SampleSet

HAND_VALUES = [0.1, 0.3, 0.5, 0.9]


def _sample_set(per_class):
    k = len(next(iter(per_class.values()))) if per_class else 1
    return SampleSet(
        prompt_digest="digest",
        per_class={n: tuple(sorted(v)) for n, v in per_class.items()},
        k=k,
        temperature=1.0,
        provenance=Provenance.MOCK,
    )


class TestDirichletWeights:
    def test_single_weight(self):
        assert dirichlet_weights(np.random.default_rng(0), 1).tolist() == [1.0]

    def test_simplex(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            w = dirichlet_weights(rng, 4)
            assert abs(w.sum() - 1.0) <= 1e-12
            assert (w >= 0).all()

    def test_marginal_means(self):
        rng = np.random.default_rng(11)
        draws = np.array([dirichlet_weights(rng, 3) for _ in range(100_000)])
        np.testing.assert_allclose(draws.mean(axis=0), [1 / 3] * 3, atol=0.01)

    def test_zero_count(self):
        with pytest.raises(PosteriorError):
            dirichlet_weights(np.random.default_rng(0), 0)


class TestCvar:
    def test_hand_cases(self):
        var_a, cvar_a = cvar(HAND_VALUES, alpha=0.1)
        assert var_a == pytest.approx(0.1, abs=1e-12)
        assert cvar_a == pytest.approx(0.45, abs=1e-12)

        var_b, cvar_b = cvar(HAND_VALUES, alpha=0.6)
        assert var_b == pytest.approx(0.5, abs=1e-12)
        assert cvar_b == pytest.approx(0.7, abs=1e-12)

    def test_cumulative_weight_reaching_alpha_exactly(self):
        # F(0.3) = 0.5 reaches alpha = 0.5, so VaR is 0.3
        assert cvar(HAND_VALUES, alpha=0.5) == pytest.approx((0.3, (0.3 + 0.5 + 0.9) / 3))

    @pytest.mark.parametrize("alpha", [0.01, 0.5, 0.99])
    def test_constant_distribution(self, alpha):
        assert cvar([0.42] * 7, alpha=alpha) == pytest.approx((0.42, 0.42))

    def test_ties_are_merged(self):
        assert cvar([0.2, 0.2, 0.2, 0.8], alpha=0.5) == pytest.approx((0.2, 0.35))

    def test_explicit_weights(self):
        var_a, cvar_a = cvar([0.0, 1.0], weights=[0.9, 0.1], alpha=0.95)
        assert (var_a, cvar_a) == (1.0, 1.0)

    def test_monotone_in_alpha_and_bounded(self):
        rng = np.random.default_rng(2024)
        alphas = np.linspace(0.01, 0.99, 25)
        for _ in range(1000):
            values = rng.random(int(rng.integers(1, 30)))
            cvars = [cvar(values, alpha=a)[1] for a in alphas]
            assert all(b >= a - 1e-12 for a, b in zip(cvars, cvars[1:]))
            assert values.mean() - 1e-12 <= min(cvars)
            assert max(cvars) <= values.max() + 1e-12

    @pytest.mark.parametrize(
        "values, weights, alpha, code",
        [
            ([], None, 0.1, "empty_samples"),
            ([0.1], None, 0.0, "invalid_alpha"),
            ([0.1], None, 1.0, "invalid_alpha"),
            ([0.1, 0.2], [0.5, 0.6], 0.1, "invalid_weights"),
            ([0.1, 0.2], [1.5, -0.5], 0.1, "invalid_weights"),
            ([0.1, 0.2], [1.0], 0.1, "invalid_weights"),
        ],
    )
    def test_errors(self, values, weights, alpha, code):
        with pytest.raises(PosteriorError) as excinfo:
            cvar(values, weights=weights, alpha=alpha)
        assert excinfo.value.code == code


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.floats(0, 1), min_size=1, max_size=20),
    a1=st.floats(0.001, 0.999),
    a2=st.floats(0.001, 0.999),
)
def test_cvar_monotone_property(values, a1, a2):
    lo, hi = sorted((a1, a2))
    assert cvar(values, alpha=lo)[1] <= cvar(values, alpha=hi)[1] + 1e-12


class TestBootstrap:
    def test_point_mass(self):
        summary = bootstrap_posterior([0.7] * 5, BootstrapConfig(R=500, alpha=0.3))
        np.testing.assert_allclose(summary.statistic_samples, 0.7, atol=1e-12)
        assert summary.cvar_alpha == pytest.approx(0.7)

    def test_single_sample(self):
        summary = bootstrap_posterior([0.4], BootstrapConfig(R=100))
        assert set(summary.statistic_samples.tolist()) == {0.4}
        assert summary.var_alpha == summary.cvar_alpha == 0.4

    @pytest.mark.slow
    def test_two_point_weighted_mean_is_uniform(self):
        started = time.perf_counter()
        summary = bootstrap_posterior([0.0, 1.0], BootstrapConfig(R=100_000, seed=7))
        elapsed = time.perf_counter() - started

        assert abs(summary.mean - 0.5) < 0.01
        assert stats.kstest(summary.statistic_samples, "uniform").statistic < 0.02
        assert elapsed < 5.0

    def test_summary_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            samples = rng.beta(2, 5, size=int(rng.integers(1, 20)))
            s = bootstrap_posterior(samples, BootstrapConfig(R=400, alpha=float(rng.uniform(0.05, 0.95))))
            assert s.mean <= s.cvar_alpha + 1e-12
            assert s.var_alpha <= s.cvar_alpha + 1e-12
            assert s.cvar_alpha <= s.statistic_samples.max() + 1e-12
            assert ((s.statistic_samples >= 0) & (s.statistic_samples <= 1)).all()

    def test_order_invariance_and_determinism(self):
        samples = [0.9, 0.1, 0.5, 0.35, 0.62]
        config = BootstrapConfig(R=1000, seed=7)
        a = bootstrap_posterior(samples, config)
        b = bootstrap_posterior(list(reversed(samples)), config)
        np.testing.assert_array_equal(a.statistic_samples, b.statistic_samples)
        assert (a.mean, a.var_alpha, a.cvar_alpha) == (b.mean, b.var_alpha, b.cvar_alpha)

    def test_posterior_mean_tracks_sample_mean(self):
        rng = np.random.default_rng(8)
        for k in (4, 8, 16):
            samples = rng.beta(5, 5, size=k)
            summary = bootstrap_posterior(samples, BootstrapConfig(R=10_000))
            assert abs(summary.mean - samples.mean()) <= 0.01

    def test_weighted_quantile_statistic(self):
        samples = [0.1, 0.2, 0.6, 0.8]
        summary = bootstrap_posterior(samples, BootstrapConfig(R=500, statistic="weighted_quantile", quantile=0.5))
        assert set(summary.statistic_samples.tolist()) <= set(samples)

    def test_empty_samples(self):
        with pytest.raises(PosteriorError):
            bootstrap_posterior([], BootstrapConfig())

    def test_out_of_range_samples(self):
        with pytest.raises(PosteriorError):
            bootstrap_posterior([0.5, 1.2], BootstrapConfig())

    @pytest.mark.parametrize(
        "kwargs",
        [{"R": 0}, {"alpha": 0.0}, {"alpha": 1.0}, {"statistic": "median"}, {"statistic": "weighted_quantile"}],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(PosteriorError):
            BootstrapConfig(**kwargs)


class TestAllClasses:
    def test_one_summary_per_class_in_order(self):
        sample_set = _sample_set({"crane": [0.7, 0.8], "forklift": [0.1, 0.3]})
        posteriors = posterior_for_all_classes(sample_set, BootstrapConfig(R=300))
        assert list(posteriors) == ["crane", "forklift"]
        assert posteriors["crane"].class_name == "crane"
        assert posteriors["crane"].cvar_alpha > posteriors["forklift"].cvar_alpha

    def test_adding_a_class_leaves_earlier_classes_untouched(self):
        config = BootstrapConfig(R=300)
        few = posterior_for_all_classes(_sample_set({"crane": [0.2, 0.9]}), config)
        more = posterior_for_all_classes(_sample_set({"crane": [0.2, 0.9], "barrier": [0.4, 0.5]}), config)
        np.testing.assert_array_equal(few["crane"].statistic_samples, more["crane"].statistic_samples)

    def test_identical_readings_give_equivalent_summaries(self):
        sample_set = _sample_set({"crane": [0.2, 0.5, 0.9], "forklift": [0.2, 0.5, 0.9]})
        posteriors = posterior_for_all_classes(sample_set, BootstrapConfig(R=20_000))
        assert posteriors["crane"].mean == pytest.approx(posteriors["forklift"].mean, abs=0.01)
        assert posteriors["crane"].cvar_alpha == pytest.approx(posteriors["forklift"].cvar_alpha, abs=0.01)

    def test_reproducible(self):
        sample_set = _sample_set({"crane": [0.2, 0.5, 0.9]})
        a = posterior_for_all_classes(sample_set, BootstrapConfig(R=300))["crane"]
        b = posterior_for_all_classes(sample_set, BootstrapConfig(R=300))["crane"]
        np.testing.assert_array_equal(a.statistic_samples, b.statistic_samples)

    def test_no_classes(self):
        with pytest.raises(PosteriorError):
            posterior_for_all_classes(_sample_set({}), BootstrapConfig())

    def test_missing_class_in_requested_order(self):
        with pytest.raises(PosteriorError) as excinfo:
            posterior_for_all_classes(_sample_set({"crane": [0.5]}), BootstrapConfig(), ["crane", "forklift"])
        assert excinfo.value.code == "missing_class"


def test_export_and_reload(tmp_path):
    posteriors = posterior_for_all_classes(_sample_set({"crane": [0.3, 0.6], "forklift": [0.1, 0.2]}), BootstrapConfig(R=200))
    path = export_posteriors(posteriors, tmp_path / "posterior.json", run_config={"seed": 7})
    reloaded = load_posteriors(path)
    assert list(reloaded) == ["crane", "forklift"]
    assert reloaded["crane"].cvar_alpha == posteriors["crane"].cvar_alpha
    assert reloaded["crane"].config.R == 200


def test_posterior_table_layout():
    posteriors = posterior_for_all_classes(_sample_set({"crane": [0.3, 0.6], "forklift": [0.1, 0.2]}), BootstrapConfig(R=200))
    table = posterior_table(posteriors)
    assert table.columns.tolist() == ["quantity", "crane", "forklift"]
    assert table["quantity"].tolist() == ["Posterior mean", "Posterior VaR", "Posterior CVaR"]
