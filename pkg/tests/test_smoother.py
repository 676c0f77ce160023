import numpy as np
import pytest

from plsim.exceptions import AllBandwidthsDegenerate, DegenerateNeighborhood
from plsim.kernels import get_kernel
from plsim.model import Dataset, make_zeta
from plsim.smoother import (
    Bandwidth,
    conditional_mean_smooth,
    cv_bandwidth,
    cv_score,
    eta_hat,
    local_linear_fit,
    smooth_batch,
)


def wls_oracle(u, lam, ystar, h, kernel):
    """Independent dense weighted-least-squares solve of the local linear
    normal equations (the oracle the smoother must reproduce)."""
    k = get_kernel(kernel)
    w = np.where(np.abs(lam - u) < h, np.asarray(k((lam - u) / h)) / h, 0.0)
    X = np.column_stack([np.ones_like(lam), lam - u])
    A = X.T @ (w[:, None] * X)
    b = X.T @ (w * ystar)
    return np.linalg.solve(A, b)


class TestLocalLinearFit:
    def test_constant_response(self):
        lam = np.linspace(0, 1, 30)
        fit = local_linear_fit(0.4, lam, np.full(30, 5.0), 0.3, "triweight")
        assert fit.a_hat == pytest.approx(5.0, abs=1e-12)
        assert fit.b_hat == pytest.approx(0.0, abs=1e-10)

    def test_affine_reproduction(self):
        rng = np.random.default_rng(3)
        lam = np.sort(rng.uniform(0, 1, 60))
        ystar = 2.0 + 3.0 * lam
        for u in (0.1, 0.42, 0.9):
            fit = local_linear_fit(u, lam, ystar, 0.25, "triweight")
            assert fit.a_hat == pytest.approx(2.0 + 3.0 * u, abs=1e-10)
            assert fit.b_hat == pytest.approx(3.0, abs=1e-10)

    def test_five_point_instance_vs_wls_oracle(self):
        lam = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        ystar = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
        fit = local_linear_fit(0.5, lam, ystar, 0.6, "triweight")
        ab = wls_oracle(0.5, lam, ystar, 0.6, "triweight")
        assert fit.a_hat == pytest.approx(ab[0], rel=1e-12)
        assert fit.b_hat == pytest.approx(ab[1], rel=1e-12)

    def test_degenerate_window(self):
        lam = np.linspace(0, 1, 20)
        with pytest.raises(DegenerateNeighborhood):
            local_linear_fit(5.0, lam, lam, 0.2, "triweight")

    def test_duplicated_points_ridge(self):
        lam = np.array([0.5, 0.5, 0.5])
        fit = local_linear_fit(0.5, lam, np.array([2.0, 2.0, 2.0]), 0.3,
                               "triweight")
        assert fit.a_hat == pytest.approx(2.0, abs=1e-6)
        assert fit.denom > 0


class TestLinearity:
    def test_linear_in_responses(self):
        rng = np.random.default_rng(11)
        lam = rng.uniform(0, 1, 50)
        y1 = rng.normal(size=50)
        y2 = rng.normal(size=50)
        a, b = 0.7, -1.3
        f12 = local_linear_fit(0.5, lam, a * y1 + b * y2, 0.3, "quartic")
        f1 = local_linear_fit(0.5, lam, y1, 0.3, "quartic")
        f2 = local_linear_fit(0.5, lam, y2, 0.3, "quartic")
        assert f12.a_hat == pytest.approx(a * f1.a_hat + b * f2.a_hat, abs=1e-10)
        assert f12.b_hat == pytest.approx(a * f1.b_hat + b * f2.b_hat, abs=1e-10)

    def test_weight_locality_bit_identical(self):
        rng = np.random.default_rng(5)
        lam = rng.uniform(0, 1, 40)
        y = rng.normal(size=40)
        out = np.abs(lam - 0.5) >= 0.2
        y2 = y.copy()
        y2[out] += 100.0
        f1 = local_linear_fit(0.5, lam, y, 0.2, "triweight")
        f2 = local_linear_fit(0.5, lam, y2, 0.2, "triweight")
        assert f1.a_hat == f2.a_hat
        assert f1.b_hat == f2.b_hat

    @pytest.mark.parametrize("kernel", ["triweight", "quartic", "epanechnikov"])
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_degree_one_reproduction_property(self, kernel, seed):
        rng = np.random.default_rng(seed)
        lam = np.sort(rng.uniform(-2, 2, 80))
        c0, c1 = rng.normal(size=2)
        y = c0 + c1 * lam
        u = rng.uniform(-1.5, 1.5, 7)
        a, b, den, effn = smooth_batch(u, lam, y, 0.8, kernel)
        assert np.all(effn >= 2)
        assert np.max(np.abs(a[:, 0] - (c0 + c1 * u))) < 1e-10
        assert np.max(np.abs(b[:, 0] - c1)) < 1e-10


class TestEtaHat:
    def test_linear_truth_small_bias(self):
        rng = np.random.default_rng(21)
        n = 500
        z = rng.uniform(0, 1, (n, 2))
        alpha = np.array([0.6, 0.8])
        lam = z @ alpha
        data = Dataset(lam.copy(), z, np.empty((n, 0)))  # eta(t) = t, eps = 0
        zeta = make_zeta(alpha, np.zeros(0))
        for u in (0.4, 0.7, 1.0):
            fit = eta_hat(u, zeta, data, Bandwidth(0.15), "triweight")
            assert abs(fit.a_hat - u) < 0.02

    def test_beta_shift_on_constant_column(self):
        rng = np.random.default_rng(8)
        n = 80
        z = rng.uniform(0, 1, (n, 2))
        x = np.ones((n, 1))
        y = np.sin(z @ np.array([0.6, 0.8])) + 2.0 + 0.1 * rng.normal(size=n)
        data = Dataset(y, z, x)
        delta = 0.37
        f0 = eta_hat(0.6, make_zeta(np.array([0.6, 0.8]), np.array([0.0])),
                     data, Bandwidth(0.3), "triweight")
        f1 = eta_hat(0.6, make_zeta(np.array([0.6, 0.8]), np.array([delta])),
                     data, Bandwidth(0.3), "triweight")
        assert f1.a_hat == pytest.approx(f0.a_hat - delta, abs=1e-10)

    def test_outside_window_degenerate(self):
        rng = np.random.default_rng(9)
        n = 50
        z = rng.uniform(0, 1, (n, 2))
        data = Dataset(rng.normal(size=n), z, np.empty((n, 0)))
        zeta = make_zeta(np.array([0.6, 0.8]), np.zeros(0))
        lam = z @ zeta.alpha
        with pytest.raises(DegenerateNeighborhood):
            eta_hat(lam.max() + 0.5, zeta, data, Bandwidth(0.2), "triweight")


class TestConditionalMeanSmooth:
    def test_constant_column(self):
        rng = np.random.default_rng(4)
        lam = rng.uniform(0, 1, 60)
        xi = np.full((60, 1), 3.25)
        out = conditional_mean_smooth(xi, lam, Bandwidth(0.3), "triweight")
        assert np.allclose(out, 3.25, atol=1e-10)

    def test_degree_one_column(self):
        rng = np.random.default_rng(6)
        lam = rng.uniform(0, 1, 60)
        out = conditional_mean_smooth(lam[:, None], lam, Bandwidth(0.3),
                                      "triweight")
        assert np.allclose(out[:, 0], lam, atol=1e-10)

    def test_five_point_vs_wls_oracle(self):
        lam = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        xi = np.array([[1.0], [0.0], [2.0], [1.5], [-1.0]])
        out = conditional_mean_smooth(xi, lam, Bandwidth(0.6), "triweight")
        for i, u in enumerate(lam):
            ab = wls_oracle(u, lam, xi[:, 0], 0.6, "triweight")
            assert out[i, 0] == pytest.approx(ab[0], rel=1e-12)


def loo_oracle(lam, ystar, h, kernel):
    """Naive leave-one-out score: refit at each point without it."""
    n = len(lam)
    total = 0.0
    for i in range(n):
        keep = np.ones(n, bool)
        keep[i] = False
        w = np.where(np.abs(lam[keep] - lam[i]) < h,
                     np.asarray(get_kernel(kernel)((lam[keep] - lam[i]) / h)) / h,
                     0.0)
        if (w > 0).sum() < 2:
            return np.inf
        X = np.column_stack([np.ones(n - 1), lam[keep] - lam[i]])
        A = X.T @ (w[:, None] * X)
        if np.linalg.det(A) <= 0:
            return np.inf
        ab = np.linalg.solve(A, X.T @ (w * ystar[keep]))
        total += (ystar[i] - ab[0]) ** 2
    return total / n


class TestCV:
    def test_single_grid_element(self):
        rng = np.random.default_rng(13)
        n = 50
        z = rng.uniform(0, 1, (n, 2))
        data = Dataset(rng.normal(size=n), z, np.empty((n, 0)))
        zeta = make_zeta(np.array([0.6, 0.8]), np.zeros(0))
        h = cv_bandwidth(data, zeta, [Bandwidth(0.33)], "triweight")
        assert h.h == 0.33
        assert h.source == "cross_validated"

    def test_matches_direct_loo_oracle(self):
        rng = np.random.default_rng(14)
        lam = rng.uniform(0, 1, 40)
        y = np.sin(4 * lam) + 0.2 * rng.normal(size=40)
        for h in (0.15, 0.3, 0.5):
            mine = cv_score(lam, y, h, "triweight")
            assert mine == pytest.approx(loo_oracle(lam, y, h, "triweight"),
                                         rel=1e-10)

    def test_oversmoothing_scored_worse(self):
        rng = np.random.default_rng(15)
        n = 200
        z = rng.uniform(0, 1, (n, 2))
        alpha = np.array([0.6, 0.8])
        lam = z @ alpha
        y = np.sin(6 * lam) + 0.1 * rng.normal(size=n)
        data = Dataset(y, z, np.empty((n, 0)))
        zeta = make_zeta(alpha, np.zeros(0))
        r = lam.max() - lam.min()
        grid = [Bandwidth(h) for h in np.linspace(0.05 * r, 0.5 * r, 10)]
        best = cv_bandwidth(data, zeta, grid, "triweight")
        big = cv_score(lam, y, r / 2, "triweight")
        small = cv_score(lam, y, best.h, "triweight")
        assert big > small

    def test_tiny_h_excluded_not_error(self):
        lam = np.linspace(0, 1, 20)
        rng = np.random.default_rng(16)
        y = np.sin(3 * lam) + 0.1 * rng.normal(size=20)
        data = Dataset(y, np.column_stack([lam, lam**2]), np.empty((20, 0)))
        zeta = make_zeta(np.array([1.0, 0.0]), np.zeros(0))
        gap = np.min(np.diff(np.sort(lam)))
        h = cv_bandwidth(data, zeta, [Bandwidth(gap / 2), Bandwidth(0.4)],
                         "triweight")
        assert h.h == 0.4

    def test_all_degenerate(self):
        lam = np.linspace(0, 1, 20)
        data = Dataset(lam.copy(), np.column_stack([lam, lam]),
                       np.empty((20, 0)))
        zeta = make_zeta(np.array([1.0, 0.0]) , np.zeros(0))
        with pytest.raises(AllBandwidthsDegenerate):
            cv_bandwidth(data, zeta, [Bandwidth(1e-6)], "triweight")

    def test_ties_break_to_larger_h(self):
        # constant response: every bandwidth gives zero LOO error
        lam = np.linspace(0, 1, 30)
        data = Dataset(np.full(30, 2.0), np.column_stack([lam, lam]),
                       np.empty((30, 0)))
        zeta = make_zeta(np.array([1.0, 0.0]), np.zeros(0))
        h = cv_bandwidth(data, zeta, [Bandwidth(0.2), Bandwidth(0.3)],
                         "triweight")
        assert h.h == 0.3
