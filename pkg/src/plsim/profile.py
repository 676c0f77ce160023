"""Profile least-squares fitting of the partially linear single-index model.

The objective Q(zeta) plugs the local linear link estimate (computed at the
current index values) into the squared-error criterion and is minimized
jointly over the sphere chart of alpha and beta with a damped quasi-Newton
method.  The gradient is the exact derivative of the computed objective,
including the dependence of the kernel weights on alpha (the plug-in
efficient-score form is retained as a convergence diagnostic and via
mode="score").
"""

from dataclasses import dataclass

import numpy as np

from plsim import backend
from plsim.exceptions import (
    DegenerateNeighborhood,
    NoConvergence,
    SingularCovariance,
)
from plsim.kernels import DEFAULT_KERNEL, get_kernel
from plsim.model import CHART_CAP, ZetaParam, make_zeta
from plsim.optimize import minimize
from plsim.smoother import Bandwidth, cv_bandwidth, default_grid, smooth_batch

EIG_CUTOFF = 1e-10  # relative eigenvalue cutoff of the covariance pseudoinverse


class FullChart:
    """theta = (chart coords of alpha, beta)."""

    def __init__(self, p, q):
        self.p = p
        self.q = q
        self.dim = p - 1 + q

    def unpack(self, theta):
        phi = theta[: self.p - 1]
        beta = theta[self.p - 1:]
        a1 = np.sqrt(max(1.0 - float(phi @ phi), 0.0))
        alpha = np.concatenate([[a1], phi])
        return alpha, beta

    def pack(self, alpha, beta):
        return np.concatenate([alpha[1:], beta])

    def valid(self, theta):
        phi = theta[: self.p - 1]
        return float(phi @ phi) <= CHART_CAP**2

    def grad_to_theta(self, theta, galpha, gbeta):
        phi = theta[: self.p - 1]
        a1 = np.sqrt(max(1.0 - float(phi @ phi), 1e-12))
        gphi = galpha[1:] - (galpha[0] / a1) * phi
        return np.concatenate([gphi, gbeta])


class _Workspace:
    """Caches the sorted view of the data for one (h, kernel) setting."""

    def __init__(self, data, h, kernel):
        self.data = data
        self.h = h.h if isinstance(h, Bandwidth) else float(h)
        self.kernel = get_kernel(kernel)
        self.n = data.n

    def _sorted(self, alpha, beta, extra=None):
        d = self.data
        lam = d.z @ alpha
        ystar = d.y - d.x @ beta if d.q else d.y
        order = np.argsort(lam, kind="stable")
        lam_s = np.ascontiguousarray(lam[order])
        lo = np.searchsorted(lam_s, lam_s - self.h, side="right").astype(np.int64)
        hi = np.searchsorted(lam_s, lam_s + self.h, side="left").astype(np.int64)
        return lam, ystar, order, lam_s, lo, hi

    def q_value(self, alpha, beta):
        """Q(zeta); +inf when some kernel window is degenerate."""
        lam, ystar, order, lam_s, lo, hi = self._sorted(alpha, beta)
        ys = np.ascontiguousarray(ystar[order, None])
        a, _, den, effn = backend.llr_batch(lam_s, lam_s, ys, lo, hi, self.h,
                                            self.kernel.kid, self.n)
        if np.any(effn < 2) or np.any(den <= 0.0):
            return np.inf
        r = ys[:, 0] - a[:, 0]
        return float(r @ r)

    def grad_exact(self, alpha, beta):
        """(Q, dQ/dalpha (ambient), dQ/dbeta); exact for the computed Q."""
        d = self.data
        lam, ystar, order, lam_s, lo, hi = self._sorted(alpha, beta)
        if np.any(hi - lo < 2):
            raise DegenerateNeighborhood("kernel window without neighbors")
        ys_s = np.ascontiguousarray(ystar[order])
        z_s = np.ascontiguousarray(d.z[order])
        galpha, q = backend.llr_alpha_grad(lam_s, ys_s, z_s, lo, hi, self.h,
                                           self.kernel.kid, self.n)
        if d.q:
            resp = np.ascontiguousarray(
                np.column_stack([ys_s, d.x[order]]))
            a, _, den, effn = backend.llr_batch(lam_s, lam_s, resp, lo, hi,
                                                self.h, self.kernel.kid, self.n)
            resid = ys_s - a[:, 0]
            xt = d.x[order] - a[:, 1:]
            gbeta = -2.0 * (resid[:, None] * xt).sum(0)
        else:
            gbeta = np.zeros(0)
        return q, galpha, gbeta

    def parts(self, alpha, beta):
        """Pieces shared by the score form, D-hat and diagnostics, in the
        original row order: (q, resid, etaprime, ztilde, xtilde)."""
        d = self.data
        lam, ystar, order, lam_s, lo, hi = self._sorted(alpha, beta)
        cols = [ystar[order, None], d.z[order]]
        if d.q:
            cols.append(d.x[order])
        resp = np.ascontiguousarray(np.column_stack(cols))
        a, b, den, effn = backend.llr_batch(lam_s, lam_s, resp, lo, hi, self.h,
                                            self.kernel.kid, self.n)
        if np.any(effn < 2) or np.any(den <= 0.0):
            raise DegenerateNeighborhood("kernel window without neighbors")
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        resid = (resp[:, 0] - a[:, 0])[inv]
        etaprime = b[:, 0][inv]
        ztilde = (d.z[order] - a[:, 1:1 + d.p])[inv]
        xtilde = ((d.x[order] - a[:, 1 + d.p:])[inv] if d.q
                  else np.empty((d.n, 0)))
        q = float(resid @ resid)
        return q, resid, etaprime, ztilde, xtilde

    def grad_score(self, alpha, beta):
        """Plug-in efficient-score form (ignores the weight derivatives)."""
        q, resid, etaprime, ztilde, xtilde = self.parts(alpha, beta)
        galpha = -2.0 * ((resid * etaprime)[:, None] * ztilde).sum(0)
        gbeta = (-2.0 * (resid[:, None] * xtilde).sum(0) if xtilde.size
                 else np.zeros(0))
        return q, galpha, gbeta


def profile_objective(zeta, data, h, kernel=DEFAULT_KERNEL):
    ws = _Workspace(data, h, kernel)
    q = ws.q_value(zeta.alpha, zeta.beta)
    if not np.isfinite(q):
        raise DegenerateNeighborhood("kernel window without neighbors")
    return q


def profile_gradient(zeta, data, h, kernel=DEFAULT_KERNEL, mode="exact",
                     fd_step=1e-6):
    """Gradient of Q in (chart, beta) coordinates.

    mode="exact" differentiates the computed objective (weights included);
    mode="score" is the plug-in efficient-score form; mode="fd" is a central
    finite difference of profile_objective.
    """
    chart = FullChart(data.p, data.q)
    theta = chart.pack(zeta.alpha, zeta.beta)
    if mode == "fd":
        ws = _Workspace(data, h, kernel)

        def f(th):
            alpha, beta = chart.unpack(th)
            return ws.q_value(alpha, beta)

        g = np.empty(chart.dim)
        for j in range(chart.dim):
            e = np.zeros(chart.dim)
            e[j] = fd_step
            g[j] = (f(theta + e) - f(theta - e)) / (2 * fd_step)
        return g
    ws = _Workspace(data, h, kernel)
    if mode == "exact":
        _, galpha, gbeta = ws.grad_exact(zeta.alpha, zeta.beta)
    elif mode == "score":
        _, galpha, gbeta = ws.grad_score(zeta.alpha, zeta.beta)
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")
    return chart.grad_to_theta(theta, galpha, gbeta)


def estimate_dhat(zeta, data, h, kernel=DEFAULT_KERNEL):
    """Plug-in information matrix n^-1 sum v_i v_i^T with
    v_i = (etahat'(lam_i) ztilde_i, xtilde_i)."""
    ws = _Workspace(data, h, kernel)
    _, _, etaprime, ztilde, xtilde = ws.parts(zeta.alpha, zeta.beta)
    v = np.column_stack([etaprime[:, None] * ztilde, xtilde])
    return (v.T @ v) / data.n


def standard_errors(dhat, sigma2_hat, n, p=None):
    """cov = sigma2 * pinv(dhat) / n with eigenvalues below
    EIG_CUTOFF * max eigenvalue truncated to zero; more than one truncated
    direction (the structural alpha direction) raises SingularCovariance."""
    dhat = np.asarray(dhat, dtype=float)
    w, v = np.linalg.eigh(dhat)
    wmax = float(np.max(w)) if w.size else 0.0
    if wmax <= 0.0:
        raise SingularCovariance("information matrix has no positive eigenvalue")
    keep = w > EIG_CUTOFF * wmax
    null_count = int((~keep).sum())
    if null_count > 1:
        raise SingularCovariance(
            f"information matrix rank {int(keep.sum())} leaves {null_count} null "
            "directions; only the structural index direction may be singular")
    winv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    cov = (v * winv) @ v.T * (sigma2_hat / n)
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return cov, se


@dataclass(frozen=True)
class PlsimFit:
    zeta_hat: ZetaParam
    h: Bandwidth
    kernel: str
    sigma2_hat: float
    dhat: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    q_value: float
    eta_curve: np.ndarray      # columns: u, eta, eta', sigma2_eta, se_eta
    iterations: int
    converged: bool
    gradient_norm: float
    eff_score_max: float       # max-norm of the empirical efficient score
    message: str = ""
    n: int = 0

    @property
    def alpha(self):
        return self.zeta_hat.alpha

    @property
    def beta(self):
        return self.zeta_hat.beta

    @property
    def se_alpha(self):
        return self.se[: self.alpha.shape[0]]

    @property
    def se_beta(self):
        return self.se[self.alpha.shape[0]:]

    def to_dict(self):
        return {
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "se": list(self.se),
            "cov": [list(row) for row in self.cov],
            "sigma2": self.sigma2_hat,
            "q_value": self.q_value,
            "bandwidth": {"h": self.h.h, "source": self.h.source},
            "kernel": self.kernel,
            "eta_curve": [list(row) for row in self.eta_curve],
            "convergence": {
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "gradient_norm": self.gradient_norm,
                "efficient_score_max": self.eff_score_max,
                "message": self.message,
            },
            "n": int(self.n),
        }


def _ols_candidates(data):
    """Starting points: OLS direction plus the coordinate axes (nudged into
    the chart).  The OLS index direction is degenerate for symmetric links
    (its population slope vanishes), hence the multi-start."""
    n, p, q = data.n, data.p, data.q
    design = np.column_stack([np.ones(n), data.z] + ([data.x] if q else []))
    coef, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    beta0 = coef[1 + p:] if q else np.zeros(0)
    az = coef[1:1 + p]
    cands = []
    nrm = float(np.linalg.norm(az))
    if nrm > 1e-10:
        a = az / nrm
        if a[0] < 0:
            a = -a
        if a[0] < 0.06:
            a = a + (0.06 - a[0]) * np.eye(p)[0]
            a = a / np.linalg.norm(a)
        cands.append(a)
    e1 = np.eye(p)[0]
    cands.append(e1)
    for j in range(1, p):
        v = 0.06 * e1 + np.eye(p)[j]
        cands.append(v / np.linalg.norm(v))
    # dedupe near-identical directions
    uniq = []
    for a in cands:
        if not any(abs(float(a @ u)) > 1 - 1e-10 for u in uniq):
            uniq.append(a)
    return [(a, beta0.copy()) for a in uniq]


def _run_opt(ws, chart, theta0, gtol, steptol, max_iter, grad_mode="exact"):
    def fun(th):
        alpha, beta = chart.unpack(th)
        return ws.q_value(alpha, beta)

    if grad_mode == "fd":
        def fun_grad(th, step=1e-6):
            f0 = fun(th)
            g = np.empty(th.size)
            for j in range(th.size):
                e = np.zeros(th.size)
                e[j] = step
                g[j] = (fun(th + e) - fun(th - e)) / (2 * step)
            return f0, g
    else:
        grad = {"exact": ws.grad_exact, "score": ws.grad_score}[grad_mode]

        def fun_grad(th):
            alpha, beta = chart.unpack(th)
            q, galpha, gbeta = grad(alpha, beta)
            return q, chart.grad_to_theta(th, galpha, gbeta)

    return minimize(fun_grad, theta0, fun=fun, valid=chart.valid,
                    gtol=gtol, steptol=steptol, max_iter=max_iter)


def _curve(ws, alpha, beta, sigma2, points=101):
    d = ws.data
    lam = d.z @ alpha
    ystar = d.y - d.x @ beta if d.q else d.y
    grid = np.linspace(float(lam.min()), float(lam.max()), points)
    a, b, den, effn = smooth_batch(grid, lam, ystar, ws.h, ws.kernel)
    keep = (effn >= 2) & (den > 0.0)
    grid, a, b = grid[keep], a[keep, 0], b[keep, 0]
    # kernel density of the index with the same bandwidth; the pointwise
    # variance constant sigma2 * intK2 / f(u) is a plug-in diagnostic
    fhat = ws.kernel((grid[:, None] - lam[None, :]) / ws.h).sum(1) / (len(lam) * ws.h)
    fhat = np.clip(fhat, 1e-300, None)
    s2eta = sigma2 * ws.kernel.ik2 / fhat
    se_eta = np.sqrt(s2eta / (len(lam) * ws.h))
    return np.column_stack([grid, a, b, s2eta, se_eta])


def _build_fit(ws, data, res, hband, kernel, with_inference=True):
    chart = FullChart(data.p, data.q)
    alpha, beta = chart.unpack(res.x)
    zeta = make_zeta(alpha, beta)
    q = res.f
    sigma2 = q / data.n
    dhat = estimate_dhat(zeta, data, ws.h, kernel)
    if with_inference:
        cov, se = standard_errors(dhat, sigma2, data.n)
    else:
        cov = np.full((data.p + data.q,) * 2, np.nan)
        se = np.full(data.p + data.q, np.nan)
    _, galpha_s, gbeta_s = ws.grad_score(alpha, beta)
    eff = chart.grad_to_theta(res.x, galpha_s, gbeta_s)
    eff_max = float(np.max(np.abs(eff))) if eff.size else 0.0
    curve = _curve(ws, alpha, beta, sigma2)
    return PlsimFit(
        zeta_hat=zeta, h=hband, kernel=get_kernel(kernel).name,
        sigma2_hat=sigma2, dhat=dhat, cov=cov, se=se, q_value=q,
        eta_curve=curve, iterations=res.iterations, converged=res.converged,
        gradient_norm=res.gradient_norm, eff_score_max=eff_max,
        message=res.message, n=data.n,
    )


def fit_plsim(data, init="auto", h="cv", kernel=DEFAULT_KERNEL, tol=1e-6,
              max_iter=200, *, cv_grid=None, multistart=True,
              refit_cv_threshold=0.2, with_inference=True, grad_mode="exact"):
    """Profile least-squares fit.

    init: "auto" (OLS + axis multi-start) or a ZetaParam warm start.
    h: "cv", a float, or a Bandwidth.  With "cv" the bandwidth is selected
    once at the initial index and held fixed; a final CV pass refits once if
    the selected bandwidth moves by more than refit_cv_threshold.
    tol scales both the gradient tolerance (tol * n * var(y)) and the
    relative step tolerance.
    """
    data.require_fit_size()
    kernel = get_kernel(kernel)
    chart = FullChart(data.p, data.q)

    if isinstance(init, ZetaParam):
        starts = [(init.alpha.copy(), init.beta.copy())]
        multistart = False
    elif init == "auto":
        starts = _ols_candidates(data)
    else:
        raise ValueError("init must be 'auto' or a ZetaParam")

    gtol = tol * data.n * max(float(np.var(data.y)), 1e-12)
    steptol = tol

    def resolve_h(alpha, beta):
        lam = data.z @ alpha
        grid = cv_grid if cv_grid is not None else default_grid(lam)
        return cv_bandwidth(data, make_zeta(alpha, beta), grid, kernel)

    cv_mode = isinstance(h, str) and h == "cv"
    if cv_mode:
        # pilot stage runs at a mid-grid bandwidth; CV happens afterwards at
        # the pilot winner, where the index actually carries the structure
        lam0 = data.z @ starts[0][0]
        r0 = float(np.max(lam0) - np.min(lam0))
        hband = Bandwidth(0.25 * r0)
    elif isinstance(h, Bandwidth):
        hband = h
    else:
        hband = Bandwidth(float(h))

    ws = _Workspace(data, hband, kernel)

    theta_starts = []
    for alpha, beta in starts:
        th = chart.pack(alpha, beta)
        phi = th[: data.p - 1]
        nrm = float(np.linalg.norm(phi))
        if nrm > CHART_CAP:
            th = th.copy()
            th[: data.p - 1] *= (CHART_CAP - 1e-9) / nrm
        theta_starts.append(th)

    if multistart and len(theta_starts) > 1:
        q0 = [ws.q_value(*chart.unpack(th)) for th in theta_starts]
        usable = [i for i in range(len(theta_starts)) if np.isfinite(q0[i])]
        if not usable:
            raise DegenerateNeighborhood(
                "every candidate start leaves some kernel window empty "
                "(bandwidth too small)")
        pool = sorted(usable, key=lambda i: (q0[i], i))[:4]
        pilots = [_run_opt(ws, chart, theta_starts[i], gtol * 30, steptol,
                           min(25, max_iter), grad_mode=grad_mode)
                  for i in pool]
        best = min(range(len(pilots)), key=lambda i: (pilots[i].f, i))
        theta0 = pilots[best].x
    else:
        theta0 = theta_starts[0]

    if cv_mode:
        hband = resolve_h(*chart.unpack(theta0))
        ws = _Workspace(data, hband, kernel)

    res = _run_opt(ws, chart, theta0, gtol, steptol, max_iter,
                   grad_mode=grad_mode)

    if cv_mode:
        alpha, beta = chart.unpack(res.x)
        h2 = resolve_h(alpha, beta)
        if abs(h2.h - hband.h) > refit_cv_threshold * hband.h:
            hband = h2
            ws = _Workspace(data, hband, kernel)
            res = _run_opt(ws, chart, res.x, gtol, steptol, max_iter,
                           grad_mode=grad_mode)

    fit = _build_fit(ws, data, res, hband, kernel, with_inference=with_inference)
    if not res.converged:
        raise NoConvergence(max_iter, fit=fit)
    return fit
