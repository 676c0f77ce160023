import numpy as np
import pytest

from plsim.simlab import (
    SIN_A,
    SIN_B,
    SimDesign,
    _ex2_covariates,
    _rng,
    gen_example1_model41,
    gen_example1_model42,
    gen_example2,
    gen_example3,
    gen_example4,
    run_mc_estimation,
    run_mc_power,
    run_mc_selection,
)


class TestGenerators:
    def test_model41_formula_and_determinism(self):
        data, truth = gen_example1_model41(50, seed=9)
        data2, _ = gen_example1_model41(50, seed=9)
        assert np.array_equal(data.y, data2.y)
        assert np.array_equal(data.z, data2.z)
        # reconstruct: same stream, same draw order
        rng = _rng(9, 0)
        z = rng.uniform(0, 1, (50, 2))
        eps = rng.standard_normal(50)
        lam = (z[:, 0] + z[:, 1] - 1) / np.sqrt(2)
        assert np.array_equal(data.y, 4 * lam**2 + 4 + 0.2 * eps)
        assert truth.sigma == 0.2
        assert np.allclose(truth.alpha, [0.7071067811865475] * 2)

    def test_model41_point_values(self):
        # eps = 0 probes of the mean function
        f = lambda z1, z2: 4 * ((z1 + z2 - 1) / np.sqrt(2)) ** 2 + 4
        assert f(0.5, 0.5) == pytest.approx(4.0)
        assert f(1.0, 1.0) == pytest.approx(6.0)

    def test_model42_link_probes(self):
        g = lambda t: np.sin((t - SIN_A) * np.pi / (SIN_B - SIN_A))
        assert g(SIN_A) == pytest.approx(0.0)
        assert g(SIN_B) == pytest.approx(0.0, abs=1e-12)  # sin(pi)
        assert g(SIN_B) + 0.3 == pytest.approx(0.3, abs=1e-12)

    def test_model42_x_alternates(self):
        data, truth = gen_example1_model42(11, seed=0)
        # odd-numbered observations (1-based) have X = 0
        assert data.x[0, 0] == 0.0
        assert data.x[1, 0] == 1.0
        assert np.array_equal(data.x[:, 0], ((np.arange(11) + 1) % 2 == 0))
        assert truth.beta[0] == 0.3

    def test_example2_truth(self):
        data, truth = gen_example2("i", 60, 0.1, seed=1)
        assert truth.alpha[0] == pytest.approx(1 / np.sqrt(12.5))
        assert truth.alpha[0] == pytest.approx(0.282843, abs=1e-6)
        assert int((truth.alpha == 0).sum()) == 4
        assert int((truth.beta == 0).sum()) == 6
        assert data.p == 8 and data.q == 12

    def test_example3_null_and_alternative(self):
        data0, truth0 = gen_example3(40, 0.1, c1=0.0, seed=2)
        assert np.all(truth0.beta[[2, 3, 4, 6]] == 0.0)
        data1, truth1 = gen_example3(40, 0.1, c1=0.05, seed=2)
        assert np.all(truth1.beta[[2, 3, 4, 6]] == 0.05)
        # same covariate stream: only y differs
        assert np.array_equal(data0.z, data1.z)

    def test_example4_truth(self):
        data, truth = gen_example4(40, 0.25, c2=0.0, seed=3)
        assert np.allclose(truth.alpha, 1 / np.sqrt(3))
        assert np.allclose(truth.beta, [-0.5, 0.3])

    def test_scenario_iii_w_correlation(self):
        rng = _rng(123, 0)
        z, x = _ex2_covariates("iii", 100_000, rng)
        shift = np.zeros_like(x)
        shift[:, 0] = 1.5 * np.exp(1.5 * z[:, 0])
        shift[:, 1] = 5.0 * z[:, 0]
        shift[:, 2] = 5.0 * np.sqrt(z[:, 1])
        shift[:, 3] = 3.0 * z[:, 0] + z[:, 1] ** 2
        w = x - shift
        corr = np.corrcoef(w[:, 0], w[:, 2])[0, 1]
        assert corr == pytest.approx(0.16, abs=0.01)
        assert np.var(w[:, 5]) == pytest.approx(0.25, rel=0.05)

    @pytest.mark.parametrize("scenario", ["i", "ii"])
    def test_scenario_moments(self, scenario):
        rng = _rng(7, 0)
        n = 100_000
        z, x = _ex2_covariates(scenario, n, rng)
        tol = 4 / np.sqrt(n)
        if scenario == "i":
            assert abs(z.mean() - 0.5) < tol
            assert abs(x.mean() - 0.5) < tol
        else:
            assert abs(z.mean()) < tol
            assert abs(x[:, 5].mean() - 0.5) < tol * 2  # bernoulli column
            assert abs(x[:, 0].std() - 1.0) < tol * 2


class TestDesign:
    def test_unknown_example_rejected(self):
        with pytest.raises(ValueError):
            SimDesign("9z")

    def test_reps_validated(self):
        with pytest.raises(ValueError):
            SimDesign("1a", reps=0)


class TestRunners:
    def test_estimation_single_rep_mse_is_squared_error(self):
        from plsim.profile import fit_plsim

        design = SimDesign("1a", n=100, reps=1, seed=5)
        report = run_mc_estimation(design)
        data, truth = design.generate(0)
        fit = fit_plsim(data)
        expect = (np.concatenate([fit.alpha, fit.beta]) - truth.values) ** 2
        assert np.allclose(report.mse, expect)
        assert report.phi0_mean is not None

    def test_estimation_deterministic_and_thread_invariant(self):
        d1 = SimDesign("1b", n=60, reps=4, seed=11, threads=1)
        d2 = SimDesign("1b", n=60, reps=4, seed=11, threads=2)
        r1 = run_mc_estimation(d1)
        r2 = run_mc_estimation(d1)
        r3 = run_mc_estimation(d2)
        assert r1.to_dict(deterministic=True) == r2.to_dict(deterministic=True)
        assert r1.to_dict(deterministic=True) == r3.to_dict(deterministic=True)

    def test_selection_smoke(self):
        design = SimDesign("2i", n=100, reps=2, seed=3, threads=2)
        report = run_mc_selection(design)
        sel = report.selection
        assert 0 <= sel["c_alpha"] <= 4
        assert 0 <= sel["c_beta"] <= 6
        assert 0 <= sel["i_alpha"] <= 4
        assert sel["oracle"]["i_alpha"] == 0.0
        assert sel["oracle"]["c_alpha"] == 4.0
        assert sel["mrme_alpha"] >= 0.0

    def test_selection_requires_sparse_design(self):
        with pytest.raises(ValueError):
            run_mc_selection(SimDesign("1a", reps=2))

    def test_power_runner_t2_smoke(self):
        design = SimDesign("4", n=80, sigma=0.1, reps=6, seed=2, threads=2,
                           c_grid=(0.0, 0.3))
        report = run_mc_power(design, "t2")
        assert len(report.power) == 2
        for entry in report.power:
            assert 0.0 <= entry["rejection_rate"] <= 1.0
        # strong alternative rejects more often than the null
        assert (report.power[1]["rejection_rate"]
                >= report.power[0]["rejection_rate"])

    def test_power_runner_t1_reports_wald(self):
        design = SimDesign("3", n=120, sigma=0.1, reps=3, seed=4, threads=1,
                           c_grid=(0.0,))
        report = run_mc_power(design, "t1")
        assert "wald_rejection_rate" in report.power[0]

    def test_power_grid_monotone_fixed_seed(self):
        design = SimDesign("4", n=100, sigma=0.1, reps=30, seed=17, threads=2,
                           c_grid=(0.0, 0.05, 0.1, 0.15, 0.2))
        report = run_mc_power(design, "t2")
        from scipy.stats import spearmanr

        rates = [e["rejection_rate"] for e in report.power]
        rho = spearmanr(np.arange(len(rates)), rates).statistic
        assert rho > 0.9

    def test_replicate_independence_pooling(self):
        # two half-size runs on seeds s and s+1 pool to within the binomial
        # band of a single run at the same total size
        c = (0.15,)
        full = run_mc_power(SimDesign("4", n=80, reps=24, seed=30, threads=2,
                                      c_grid=c), "t2")
        h1 = run_mc_power(SimDesign("4", n=80, reps=12, seed=30, threads=2,
                                    c_grid=c), "t2")
        h2 = run_mc_power(SimDesign("4", n=80, reps=12, seed=31, threads=2,
                                    c_grid=c), "t2")
        pooled = 0.5 * (h1.power[0]["rejection_rate"]
                        + h2.power[0]["rejection_rate"])
        p = full.power[0]["rejection_rate"]
        band = 1.96 * np.sqrt(max(p * (1 - p), 0.04) * (2 / 24))
        assert abs(pooled - p) <= band

    def test_report_runtime_excluded_when_deterministic(self):
        design = SimDesign("1a", n=60, reps=2, seed=1)
        report = run_mc_estimation(design)
        d = report.to_dict(deterministic=True)
        assert "runtime_seconds" not in d
        assert "runtime_seconds" in report.to_dict()
