"""Linear-hypothesis tests on the parametric part and the goodness-of-link
test, with chi-square calibration.

T1 compares the restricted and unrestricted profile least-squares minima:
the affine constraint A zeta = delta is removed by a null-space
reparametrization; the sphere constraint on the index part is then handled
by a chart of the constrained subspace, with both hemispheres of the reduced
sphere searched whenever the constraint touches alpha.

T2 keeps the parametric estimates of the full fit and compares the local
linear link against the straight-line fit of the partial residuals on the
fitted index.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from plsim.chi2 import chi2_cdf, chi2_quantile
from plsim.exceptions import (
    DegenerateIndex,
    InfeasibleConstraint,
    RankDeficientA,
    SingularMiddleMatrix,
)
from plsim.kernels import DEFAULT_KERNEL, get_kernel
from plsim.model import CHART_CAP, make_zeta
from plsim.optimize import minimize
from plsim.profile import EIG_CUTOFF, _Workspace, fit_plsim

RANK_TOL = 1e-10


@dataclass(frozen=True)
class LinearHypothesis:
    """H0: a_mat @ zeta = delta with a_mat full row rank m x (p+q)."""

    a_mat: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        d = np.asarray(self.delta, dtype=float).reshape(-1)
        if a.shape[0] != d.shape[0]:
            raise ValueError("a_mat and delta row counts differ")
        sv = np.linalg.svd(a, compute_uv=False)
        if a.shape[0] > a.shape[1] or sv[-1] <= RANK_TOL * sv[0]:
            raise RankDeficientA(f"A has rank < m = {a.shape[0]}")
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "delta", d)

    @property
    def m(self):
        return self.a_mat.shape[0]

    @classmethod
    def zero_coords(cls, indices, p, q, values=None):
        """Pin the listed ambient coordinates (0-based over (alpha, beta))."""
        indices = list(indices)
        a = np.zeros((len(indices), p + q))
        for r, j in enumerate(indices):
            a[r, j] = 1.0
        vals = np.zeros(len(indices)) if values is None else np.asarray(values, float)
        return cls(a, vals)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    noncentrality: float
    p_value: float
    method: str
    nuisance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "df": self.df,
            "noncentrality": self.noncentrality,
            "p_value": self.p_value,
            "method": self.method,
            "nuisance": self.nuisance,
        }


def kernel_constants(kernel, variant="printed"):
    """(K(0), int K^2, r_K).  The printed r_K formula has a denominator that
    integrates to 1/2 for any density kernel, so r_K = 2 K(0) - int K^2; the
    squared-integrand variant is available as variant="squared"."""
    k = get_kernel(kernel)
    return k.k0, k.ik2, k.r_k(variant)


class _SphereAffineMap:
    """Parametrizes {zeta : A zeta = delta, ||alpha|| = 1}.

    theta = (phi, gamma_beta); the alpha part moves on the sphere slice
    alpha = alpha_p + N_alpha * (s * sqrt(r^2 - ||phi||^2), phi) and beta
    solves its rows of the constraint affinely given alpha.
    """

    def __init__(self, hyp, p, q, hemisphere=1.0):
        a, d = hyp.a_mat, hyp.delta
        m = hyp.m
        self.p, self.q = p, q
        if a.shape[1] != p + q:
            raise ValueError("A column count must equal p + q")
        a_alpha, a_beta = a[:, :p], a[:, p:]
        # rotate rows so that beta-free constraints separate
        if q and np.linalg.norm(a_beta) > 0:
            u, sv, vt = np.linalg.svd(a_beta)
            rb = int(np.sum(sv > RANK_TOL * max(sv[0], 1.0)))
        else:
            u = np.eye(m)
            rb = 0
        u1, u2 = u[:, :rb], u[:, rb:]
        self.B = u1.T @ a_beta if rb else np.zeros((0, q))
        self.E = u1.T @ a_alpha if rb else np.zeros((0, p))
        self.e = u1.T @ d if rb else np.zeros(0)
        c = u2.T @ a_alpha
        dal = u2.T @ d
        m_alpha = c.shape[0]
        if m_alpha:
            sv_c = np.linalg.svd(c, compute_uv=False)
            if sv_c[-1] <= RANK_TOL * max(sv_c[0], 1.0):
                raise RankDeficientA("constraint rows collapse on the alpha block")
            self.alpha_p = np.linalg.lstsq(c, dal, rcond=None)[0]
            _, _, vt_c = np.linalg.svd(c)
            self.n_alpha = vt_c[m_alpha:].T  # (p, k)
        else:
            self.alpha_p = np.zeros(p)
            self.n_alpha = np.eye(p)
        self.k = self.n_alpha.shape[1]
        r2 = 1.0 - float(self.alpha_p @ self.alpha_p)
        if r2 < -1e-10:
            raise InfeasibleConstraint(
                "affine constraints on alpha are incompatible with ||alpha|| = 1")
        self.r = float(np.sqrt(max(r2, 0.0)))
        if self.k == 0 and abs(self.r - 0.0) > 0 and abs(1.0 - np.linalg.norm(self.alpha_p)) > 1e-8:
            raise InfeasibleConstraint("alpha is fully pinned off the unit sphere")
        if rb:
            self.B_pinv = np.linalg.pinv(self.B)
            self.n_beta = np.linalg.svd(self.B)[2][rb:].T if q else np.zeros((0, 0))
        else:
            self.B_pinv = np.zeros((q, 0))
            self.n_beta = np.eye(q)
        self.db = self.n_beta.shape[1]
        self.s = float(hemisphere)
        self.dim = max(self.k - 1, 0) + self.db
        self.touches_alpha = m_alpha > 0

    # --- theta layout: (phi (k-1), gamma_beta (db)) ---
    def _gamma_alpha(self, phi):
        ss = float(phi @ phi)
        g1 = self.s * np.sqrt(max(self.r**2 - ss, 0.0))
        return np.concatenate([[g1], phi])

    def unpack(self, theta):
        kphi = max(self.k - 1, 0)
        phi = theta[:kphi]
        gb = theta[kphi:]
        if self.k >= 1:
            alpha = self.alpha_p + self.n_alpha @ self._gamma_alpha(phi)
        else:
            alpha = self.alpha_p
        beta = (self.B_pinv @ (self.e - self.E @ alpha) if self.e.size
                else np.zeros(self.q))
        if self.db:
            beta = beta + self.n_beta @ gb
        return alpha, beta

    def valid(self, theta):
        kphi = max(self.k - 1, 0)
        phi = theta[:kphi]
        return float(phi @ phi) <= (CHART_CAP * self.r) ** 2 if self.k >= 1 else True

    def grad_to_theta(self, theta, galpha, gbeta):
        kphi = max(self.k - 1, 0)
        phi = theta[:kphi]
        parts = []
        if self.k >= 1:
            ss = float(phi @ phi)
            g1 = self.s * np.sqrt(max(self.r**2 - ss, 1e-14))
            dga = np.vstack([-(self.s**2) * phi / g1, np.eye(kphi)])  # (k, k-1)
            dalpha = self.n_alpha @ dga  # (p, k-1)
            g_amb = galpha.copy()
            if self.e.size:
                # beta depends on alpha through the coupled rows
                g_amb = g_amb - (self.B_pinv @ self.E).T @ gbeta
            parts.append(dalpha.T @ g_amb)
        if self.db:
            parts.append(self.n_beta.T @ gbeta)
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def project_start(self, alpha, beta):
        """Feasible theta nearest to (alpha, beta), on this hemisphere."""
        if self.k >= 1:
            ga = self.n_alpha.T @ (alpha - self.alpha_p)
            nrm = float(np.linalg.norm(ga))
            if nrm < 1e-12:
                ga = np.zeros(self.k)
                ga[0] = self.r
            else:
                ga = ga * (self.r / nrm)
            if self.s * ga[0] < 0:
                ga[0] = -ga[0]  # reflect onto the requested hemisphere
            phi = ga[1:]
            cap = CHART_CAP * self.r
            nphi = float(np.linalg.norm(phi))
            if nphi > cap:
                phi = phi * ((cap - 1e-12) / nphi)
            alpha_feas = self.alpha_p + self.n_alpha @ self._gamma_alpha(phi)
        else:
            phi = np.zeros(0)
            alpha_feas = self.alpha_p
        beta_part = (self.B_pinv @ (self.e - self.E @ alpha_feas) if self.e.size
                     else np.zeros(self.q))
        gb = self.n_beta.T @ (beta - beta_part) if self.db else np.zeros(0)
        return np.concatenate([phi, gb])


def _restricted_minimum(data, hyp, h, kernel, start_zeta, gtol, steptol,
                        max_iter):
    """Infimum of Q over the constrained set; returns (Q0, zeta0)."""
    ws = _Workspace(data, h, kernel)
    p, q = data.p, data.q
    best = None
    base = _SphereAffineMap(hyp, p, q)
    hemis = (1.0, -1.0) if (base.touches_alpha and base.k >= 1) else (1.0,)
    for s in hemis:
        pmap = _SphereAffineMap(hyp, p, q, hemisphere=s)
        theta0 = pmap.project_start(start_zeta.alpha, start_zeta.beta)

        def fun(th, pmap=pmap):
            alpha, beta = pmap.unpack(th)
            return ws.q_value(alpha, beta)

        def fun_grad(th, pmap=pmap):
            alpha, beta = pmap.unpack(th)
            qv, galpha, gbeta = ws.grad_exact(alpha, beta)
            return qv, pmap.grad_to_theta(th, galpha, gbeta)

        if pmap.dim == 0:
            alpha, beta = pmap.unpack(np.zeros(0))
            qv = ws.q_value(alpha, beta)
            cand = (qv, alpha, beta)
        else:
            res = minimize(fun_grad, theta0, fun=fun, valid=pmap.valid,
                           gtol=gtol, steptol=steptol, max_iter=max_iter)
            alpha, beta = pmap.unpack(res.x)
            cand = (res.f, alpha, beta)
        feasible = cand[1][0] > 0 or not base.touches_alpha
        if not np.isfinite(cand[0]):
            continue
        if feasible and (best is None or cand[0] < best[0]):
            best = cand
    if best is None:
        raise InfeasibleConstraint(
            "no feasible restricted optimum with alpha[0] > 0 was found")
    qv, alpha, beta = best
    nrm = np.linalg.norm(alpha)
    alpha = alpha / nrm
    return qv, alpha, beta


def test_linear_t1(data, hyp, h="cv", kernel=DEFAULT_KERNEL, tol=1e-6,
                   max_iter=200, fit=None):
    """Quasi-likelihood-ratio statistic n (Q0 - Q1)/Q1, chi-square with m
    degrees of freedom under the null."""
    kernel = get_kernel(kernel)
    if fit is None:
        fit = fit_plsim(data, h=h, kernel=kernel, tol=tol, max_iter=max_iter)
    hband = fit.h
    gtol = tol * data.n * max(float(np.var(data.y)), 1e-12)
    q1 = fit.q_value
    q0, alpha0, beta0 = _restricted_minimum(
        data, hyp, hband, kernel, fit.zeta_hat, gtol, tol, max_iter)
    if q0 < q1:
        # the restricted optimum is feasible for the unrestricted problem:
        # re-polish the unrestricted fit from it so Q1 <= Q0 holds
        try:
            repolish = fit_plsim(data, init=make_zeta(alpha0, beta0), h=hband,
                                 kernel=kernel, tol=tol, max_iter=max_iter,
                                 with_inference=False)
            if repolish.q_value < q1:
                q1 = repolish.q_value
        except Exception:
            pass
        q0 = max(q0, q1)
    stat = data.n * (q0 - q1) / q1
    pval = 1.0 - chi2_cdf(stat, hyp.m)
    return TestResult(float(stat), float(hyp.m), 0.0, float(pval), "T1",
                      {"h": hband.h, "kernel": kernel.name})


def test_linear_wald(fit, hyp):
    """(A zeta - delta)' (A cov A')^{-1} (A zeta - delta) with the fit's
    plug-in covariance, so the statistic shares T1's chi-square calibration."""
    zeta = np.concatenate([fit.alpha, fit.beta])
    dev = hyp.a_mat @ zeta - hyp.delta
    mid = hyp.a_mat @ fit.cov @ hyp.a_mat.T
    w, v = np.linalg.eigh(mid)
    row_scale = float(np.max(np.sum(hyp.a_mat**2, axis=1)))
    floor = 1e-12 * max(float(np.max(np.diag(fit.cov))), 1e-300) * row_scale
    if w[-1] <= floor or w[0] <= 1e-12 * w[-1]:
        raise SingularMiddleMatrix(
            "A cov A' is singular; the hypothesis touches the structural "
            "null direction of the information matrix")
    stat = float(dev @ (v @ ((v.T @ dev) / w)))
    pval = 1.0 - chi2_cdf(stat, hyp.m)
    return TestResult(stat, float(hyp.m), 0.0, float(pval), "Wald",
                      {"h": fit.h.h, "kernel": fit.kernel})


def test_link_t2(data, h="cv", kernel=DEFAULT_KERNEL, tol=1e-6, max_iter=200,
                 rk_variant="printed", fit=None):
    """Goodness-of-link test of H0: eta linear, via the generalized F ratio
    of the straight-line and local linear residual sums of squares."""
    kernel = get_kernel(kernel)
    if fit is None:
        fit = fit_plsim(data, h=h, kernel=kernel, tol=tol, max_iter=max_iter)
    lam = data.z @ fit.alpha
    if np.unique(lam).size < 3:
        raise DegenerateIndex("fitted index has fewer than 3 distinct values")
    ytil = data.y - data.x @ fit.beta if data.q else data.y
    design = np.column_stack([np.ones(data.n), lam])
    theta, *_ = np.linalg.lstsq(design, ytil, rcond=None)
    rss0 = float(np.sum((ytil - design @ theta) ** 2))
    rss1 = fit.q_value
    k0, ik2, rk = kernel_constants(kernel, rk_variant)
    if rss1 <= 1e-12 * data.n * max(float(np.var(data.y)), 1e-300):
        # both fits are exact to machine precision: the ratio of the two
        # near-zero residual sums carries no evidence against linearity
        stat = 0.0
    else:
        stat = 0.5 * rk * data.n * (rss0 - rss1) / rss1
    if stat < 0.0:
        warnings.warn(
            f"T2 statistic {stat:.3e} is negative (straight line fits better "
            "in-sample than the smoother); reporting 0", stacklevel=2)
        stat = 0.0
    span = float(lam.max() - lam.min())
    df_n = rk * span * (k0 - 0.5 * ik2) / fit.h.h
    pval = 1.0 - chi2_cdf(stat, df_n)
    return TestResult(float(stat), float(df_n), 0.0, float(pval), "T2",
                      {"h": fit.h.h, "kernel": kernel.name,
                       "rk": rk, "rk_variant": rk_variant,
                       "theta0": float(theta[0]), "theta1": float(theta[1])})


def theoretical_power_t1(hyp, zeta_true, dhat, sigma2, n, level=0.05):
    """Finite-n plug-in of the noncentrality and the implied asymptotic
    power at the given level."""
    zeta = np.concatenate([zeta_true.alpha, zeta_true.beta])
    dev = hyp.a_mat @ zeta - hyp.delta
    w, v = np.linalg.eigh(np.asarray(dhat, dtype=float))
    keep = w > EIG_CUTOFF * max(float(w[-1]), 1e-300)
    winv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    dpinv = (v * winv) @ v.T
    mid = hyp.a_mat @ dpinv @ hyp.a_mat.T
    wm, vm = np.linalg.eigh(mid)
    if wm[-1] <= 0 or wm[0] <= 1e-12 * wm[-1]:
        raise SingularMiddleMatrix("A D^+ A' is singular")
    phi = float(n / sigma2 * (dev @ (vm @ ((vm.T @ dev) / wm))))
    crit = chi2_quantile(1.0 - level, hyp.m)
    power = 1.0 - chi2_cdf(crit, hyp.m, noncentrality=phi)
    return float(power), phi
