import numpy as np
import pytest

from plsprobit import ConfigurationError
from plsprobit.simulate import (
    ScenarioConfig,
    generate_scenario,
    replicate_once,
    run_replications,
    scenario_document,
    smooth_component,
    summarize,
)

import oracles


class TestScenarioConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ScenarioConfig(case=3, lambda_true=0.2)
        with pytest.raises(ConfigurationError):
            ScenarioConfig(case=1, lambda_true=0.96)
        with pytest.raises(ConfigurationError):
            ScenarioConfig(case=1, lambda_true=0.2, n=5000, grid_side=60)
        with pytest.raises(ConfigurationError):
            ScenarioConfig(case=1, lambda_true=0.2, reps=0)


class TestGenerateScenario:
    def test_smooth_component_values(self):
        assert smooth_component(1, 0.0) == pytest.approx(2.0)
        assert smooth_component(1, 1.0) == pytest.approx(1.0 + 2 * np.cos(0.5 * np.pi))
        assert smooth_component(2, 0.0) == pytest.approx(1.0)
        assert smooth_component(2, 2.0) == pytest.approx(2.0)

    def test_case1_z_variance_is_one(self):
        # sum of 48 U[-0.25, 0.25]: variance 48 * 0.5^2 / 12 = 1 analytically
        assert 48 * 0.5**2 / 12 == 1.0
        cfg = ScenarioConfig(case=1, lambda_true=0.2, n=3000, grid_side=60, seed=2)
        data, _ = generate_scenario(cfg, 0)
        assert data.z.var(ddof=1) == pytest.approx(1.0, abs=0.08)
        assert np.all(np.abs(data.z) <= 12.0)

    def test_case1_covariates(self):
        cfg = ScenarioConfig(case=1, lambda_true=0.2, n=2500, grid_side=60, seed=3)
        data, _ = generate_scenario(cfg, 0)
        assert set(np.unique(data.x[:, 0])) <= {0.0, 1.0}
        assert data.x[:, 0].mean() == pytest.approx(0.7, abs=0.05)
        assert data.x[:, 1].min() >= -2.0 and data.x[:, 1].max() <= 2.0

    def test_case2_conditional_mean_at_origin(self):
        # lam = 0, X = 0, Z = 0: P(Y=1) = Phi(g(0)) = Phi(1); Monte Carlo at
        # 1e5 draws of the latent error
        rng = np.random.default_rng(10)
        draws = rng.standard_normal(100_000)
        mc = np.mean(1.0 + draws > 0)
        assert mc == pytest.approx(oracles.PHI_CDF_AT_1, abs=0.01)

    def test_bitwise_reproducible(self):
        cfg = ScenarioConfig(case=2, lambda_true=0.4, n=100, grid_side=30, seed=77)
        d1, w1 = generate_scenario(cfg, 3)
        d2, w2 = generate_scenario(cfg, 3)
        assert np.array_equal(d1.y, d2.y)
        assert np.array_equal(d1.x, d2.x)
        assert np.array_equal(d1.z, d2.z)
        assert np.array_equal(d1.coords, d2.coords)
        assert (w1.matrix != w2.matrix).nnz == 0

    def test_replications_differ(self):
        cfg = ScenarioConfig(case=2, lambda_true=0.4, n=100, grid_side=30, seed=77)
        d1, _ = generate_scenario(cfg, 0)
        d2, _ = generate_scenario(cfg, 1)
        assert not np.array_equal(d1.z, d2.z)

    def test_distinct_locations(self):
        cfg = ScenarioConfig(case=1, lambda_true=0.2, n=300, grid_side=25, seed=5)
        data, _ = generate_scenario(cfg, 0)
        assert len({(a, b) for a, b in data.coords}) == 300

    def test_case2_response_rate_band(self):
        cfg = ScenarioConfig(case=2, lambda_true=0.0, n=200, seed=8)
        data, _ = generate_scenario(cfg, 0)
        assert 0.5 < data.y.mean() < 0.95


class TestSummarize:
    def test_basic(self):
        out = summarize(np.array([[1.0], [2.0], [3.0]]), ["a"])
        assert out["a"]["mean"] == 2.0
        assert out["a"]["median"] == 2.0
        assert out["a"]["sd"] == pytest.approx(1.0)

    def test_even_count_median_midpoint(self):
        out = summarize(np.array([[1.0], [2.0], [3.0], [4.0]]), ["a"])
        assert out["a"]["median"] == 2.5

    def test_single_vector_sd_zero(self):
        out = summarize(np.array([[1.5, -2.0]]), ["a", "b"])
        assert out["a"]["sd"] == 0.0 and out["b"]["sd"] == 0.0
        assert out["a"]["mean"] == out["a"]["median"] == 1.5

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        est = rng.normal(size=(11, 2))
        a = summarize(est, ["p", "q"])
        b = summarize(est[rng.permutation(11)], ["p", "q"])
        assert a == b

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize(np.empty((0, 2)), ["a", "b"])


@pytest.fixture(scope="module")
def tiny_run():
    cfg = ScenarioConfig(case=2, lambda_true=0.2, n=80, grid_side=30, reps=2, seed=19)
    records, summary = run_replications(cfg, ("plspm", "plpm", "lsaep"), workers=1)
    return cfg, records, summary


class TestRunReplications:
    def test_counts_and_failures(self, tiny_run):
        cfg, records, summary = tiny_run
        assert len(records) == 2
        assert summary.failure_count == {"plspm": 0, "plpm": 0, "lsaep": 0}
        assert summary.completed == {"plspm": 2, "plpm": 2, "lsaep": 2}

    def test_single_rep_degenerate_summary(self):
        cfg = ScenarioConfig(case=2, lambda_true=0.2, n=80, grid_side=30, reps=1, seed=19)
        _, summary = run_replications(cfg, ("plpm",), workers=1)
        stats = summary.stats["plpm"]["beta1"]
        assert stats["sd"] == 0.0
        assert stats["mean"] == stats["median"]

    def test_method_isolation(self, tiny_run):
        # dropping a method leaves the others' estimates unchanged
        cfg, records, _ = tiny_run
        solo, _ = run_replications(cfg, ("plpm",), workers=1)
        for rec_all, rec_solo in zip(records, solo):
            assert rec_all["fits"]["plpm"] == rec_solo["fits"]["plpm"]

    def test_parallel_equals_serial(self, tiny_run):
        cfg, records, summary = tiny_run
        records2, summary2 = run_replications(cfg, ("plspm", "plpm", "lsaep"), workers=2)
        assert records == records2
        assert summary.stats == summary2.stats

    def test_unknown_method_rejected(self):
        cfg = ScenarioConfig(case=2, lambda_true=0.2, n=80, grid_side=30, reps=1, seed=19)
        with pytest.raises(ConfigurationError):
            run_replications(cfg, ("nope",))

    def test_document_shape(self, tiny_run):
        cfg, records, summary = tiny_run
        doc = scenario_document(cfg, ("plspm", "plpm", "lsaep"), records, summary)
        assert doc["format_version"] == 1
        assert doc["config"]["n"] == 80
        assert len(doc["replications"]) == 2
        assert "plspm" in doc["summary"]

    def test_replicate_once_records_params(self):
        cfg = ScenarioConfig(case=2, lambda_true=0.2, n=80, grid_side=30, reps=1, seed=19)
        rec = replicate_once(cfg, 0, ("lsaep",))
        fit = rec["fits"]["lsaep"]
        assert set(fit["params"]) == {"beta1", "beta2", "lambda"}
        assert "g_linear" in fit
