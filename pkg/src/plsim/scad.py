"""SCAD-penalized profile least squares and the BIC tuning-parameter search.

The penalized objective  L_P = Q/2 + n sum p_lam1j(|alpha_j|) + n sum
p_lam2k(|beta_k|)  is minimized by iterated local quadratic approximation:
each penalty is replaced by its quadratic majorant with curvature
p'(|t|)/|t| at the current iterate, the resulting ridge-weighted profile
problem is solved by the quasi-Newton core with a warm start, and
coefficients below the zero threshold are frozen at exact zero.  Frozen
coordinates never re-enter (their covariate column is removed), so the
index stays on the unit sphere of the active coordinates throughout.

Per-coordinate tuning parameters follow the unpenalized-standard-error
scaling lam_1j = lam * se(alpha_j), lam_2k = lam * se(beta_k).
"""

from dataclasses import dataclass

import numpy as np

from plsim.exceptions import AllCoefficientsZero, NonFiniteSE
from plsim.kernels import get_kernel
from plsim.model import CHART_CAP, ZetaParam, make_zeta
from plsim.optimize import minimize
from plsim.profile import FullChart, _Workspace

OUTER_MAX = 50
OUTER_RTOL = 1e-6
ZERO_THRESHOLD_SCALE = 1e-8


@dataclass(frozen=True)
class ScadPenalty:
    lam: float
    a: float = 3.7

    def __post_init__(self):
        if self.a <= 2:
            raise ValueError("SCAD shape parameter a must exceed 2")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def scad_deriv(pen, theta):
    """p'_lambda(theta) for theta >= 0."""
    lam, a = pen.lam, pen.a
    theta = float(theta)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if lam == 0.0:
        return 0.0
    if theta <= lam:
        return lam
    return max(a * lam - theta, 0.0) / (a - 1.0)


def scad_value(pen, theta):
    """p_lambda(theta), the integral of p' with p(0) = 0."""
    lam, a = pen.lam, pen.a
    theta = float(theta)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if lam == 0.0:
        return 0.0
    if theta <= lam:
        return lam * theta
    if theta <= a * lam:
        return -(theta * theta - 2.0 * a * lam * theta + lam * lam) / (2.0 * (a - 1.0))
    return lam * lam * (a + 1.0) / 2.0


@dataclass(frozen=True)
class PenaltyPlan:
    lambda1: np.ndarray  # per-coordinate levels for alpha (length p)
    lambda2: np.ndarray  # per-coordinate levels for beta (length q)
    a: float = 3.7

    def __post_init__(self):
        l1 = np.asarray(self.lambda1, dtype=float)
        l2 = np.asarray(self.lambda2, dtype=float)
        if np.any(l1 < 0) or np.any(l2 < 0):
            raise ValueError("penalty levels must be nonnegative")
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)

    @property
    def penalize_alpha(self):
        return bool(np.any(self.lambda1 > 0))

    @property
    def penalize_beta(self):
        return bool(np.any(self.lambda2 > 0))


def lambda_plan(base_lambda, unpenalized_fit, mode="both"):
    """Per-coordinate levels lam*se from the unpenalized fit, zeroed on one
    side for the beta-only / alpha-only variants."""
    se_a = np.asarray(unpenalized_fit.se_alpha, dtype=float)
    se_b = np.asarray(unpenalized_fit.se_beta, dtype=float)
    if not (np.all(np.isfinite(se_a)) and np.all(np.isfinite(se_b))):
        raise NonFiniteSE("unpenalized fit has non-finite standard errors")
    l1 = base_lambda * se_a
    l2 = base_lambda * se_b
    if mode == "beta_only":
        l1 = np.zeros_like(l1)
    elif mode == "alpha_only":
        l2 = np.zeros_like(l2)
    elif mode != "both":
        raise ValueError(f"unknown penalty mode {mode!r}")
    return PenaltyPlan(l1, l2)


@dataclass(frozen=True)
class PenalizedFit:
    zeta: ZetaParam
    df: int
    q_value: float
    support_alpha: np.ndarray  # bool (p,)
    support_beta: np.ndarray   # bool (q,)
    outer_iterations: int
    converged: bool
    lp_trace: tuple = ()       # penalized objective per outer iteration

    @property
    def all_zero(self):
        return not self.support_beta.any() and self.support_alpha.sum() <= 1


class _ActiveState:
    """Active coordinates and the permuted reduced problem.

    order: original alpha indices of the active coordinates, root first.
    bidx: original beta indices still active.
    """

    def __init__(self, order, bidx, alpha_red, beta_red):
        self.order = list(order)
        self.bidx = list(bidx)
        self.alpha_red = np.asarray(alpha_red, dtype=float)
        self.beta_red = np.asarray(beta_red, dtype=float)

    def ambient(self, p, q):
        alpha = np.zeros(p)
        alpha[self.order] = self.alpha_red
        beta = np.zeros(q)
        if self.bidx:
            beta[self.bidx] = self.beta_red
        return alpha, beta

    def reroot(self):
        """Permute so the largest-magnitude coordinate is the chart root and
        is positive (a global sign flip leaves the objective unchanged)."""
        j = int(np.argmax(np.abs(self.alpha_red)))
        if j != 0:
            self.order.insert(0, self.order.pop(j))
            a = self.alpha_red.tolist()
            a.insert(0, a.pop(j))
            self.alpha_red = np.asarray(a)
        if self.alpha_red[0] < 0:
            self.alpha_red = -self.alpha_red


def _final_zeta(state, p, q):
    """Ambient zeta with the published sign convention: first nonzero alpha
    coordinate positive (the identifiability rule alpha_1 > 0 whenever
    alpha_1 survives)."""
    alpha, beta = state.ambient(p, q)
    nz = np.nonzero(alpha)[0]
    if nz.size and alpha[nz[0]] < 0:
        alpha = -alpha
    return alpha, beta


def penalized_fit(data, plan, init, h, kernel, *, tol=1e-6, inner_max_iter=60,
                  outer_max=OUTER_MAX, keep_trace=False):
    """Local minimizer of the SCAD-penalized profile objective.

    init must come from the unpenalized fit (warm start); its magnitude sets
    the zero threshold.  Raises AllCoefficientsZero (with the degenerate fit
    attached) when beta and all free index coordinates vanish.
    """
    p, q = data.p, data.q
    zu = np.concatenate([init.alpha, init.beta])
    thr = ZERO_THRESHOLD_SCALE * (1.0 + float(np.max(np.abs(zu))))
    gtol = tol * data.n * max(float(np.var(data.y)), 1e-12)
    kernel = get_kernel(kernel)

    if not np.any(plan.lambda1 > 0) and not np.any(plan.lambda2 > 0):
        # no penalty anywhere: the warm start (the unpenalized fit, by this
        # function's precondition) is already the minimizer
        qv = _Workspace(data, h, kernel).q_value(init.alpha, init.beta)
        return PenalizedFit(init, int(np.sum(init.alpha != 0) + np.sum(init.beta != 0)),
                            float(qv), init.alpha != 0, init.beta != 0, 0, True)

    state = _ActiveState(list(range(p)), list(range(q)),
                         init.alpha.copy(), init.beta.copy())
    state.reroot()

    prev = np.concatenate(state.ambient(p, q))
    lp_trace = []
    converged = False
    outer = 0
    for outer in range(1, outer_max + 1):
        # freeze penalized coordinates below the threshold (root excluded)
        keep_a = [0] + [j for j in range(1, len(state.order))
                        if abs(state.alpha_red[j]) >= thr
                        or plan.lambda1[state.order[j]] == 0.0]
        keep_b = [k for k in range(len(state.bidx))
                  if abs(state.beta_red[k]) >= thr
                  or plan.lambda2[state.bidx[k]] == 0.0]
        support_changed = (len(keep_a) != len(state.order)
                           or len(keep_b) != len(state.bidx))
        state = _ActiveState([state.order[j] for j in keep_a],
                             [state.bidx[k] for k in keep_b],
                             state.alpha_red[keep_a], state.beta_red[keep_b])
        state.alpha_red = state.alpha_red / np.linalg.norm(state.alpha_red)
        state.reroot()

        if not state.bidx and len(state.order) == 1:
            break  # collapsed: handled after the loop

        sub = data.subset(np.asarray(state.order, dtype=int),
                          np.asarray(state.bidx, dtype=int))
        ws = _Workspace(sub, h, kernel)
        chart = FullChart(sub.p, sub.q)
        l1 = plan.lambda1[state.order]
        l2 = plan.lambda2[state.bidx] if state.bidx else np.zeros(0)
        pen_a = [ScadPenalty(l, plan.a) for l in l1]
        pen_b = [ScadPenalty(l, plan.a) for l in l2]
        c_a = np.array([scad_deriv(pe, abs(t)) / max(abs(t), 1e-12)
                        if pe.lam > 0 else 0.0
                        for pe, t in zip(pen_a, state.alpha_red)])
        c_b = np.array([scad_deriv(pe, abs(t)) / max(abs(t), 1e-12)
                        if pe.lam > 0 else 0.0
                        for pe, t in zip(pen_b, state.beta_red)]) if state.bidx else np.zeros(0)

        n = data.n

        def fun(th):
            alpha, beta = chart.unpack(th)
            qv = ws.q_value(alpha, beta)
            return 0.5 * qv + 0.5 * n * (float(c_a @ (alpha * alpha))
                                         + float(c_b @ (beta * beta)))

        def fun_grad(th):
            alpha, beta = chart.unpack(th)
            qv, galpha, gbeta = ws.grad_exact(alpha, beta)
            f = 0.5 * qv + 0.5 * n * (float(c_a @ (alpha * alpha))
                                      + float(c_b @ (beta * beta)))
            ga = 0.5 * galpha + n * c_a * alpha
            gb = 0.5 * gbeta + n * c_b * beta
            return f, chart.grad_to_theta(th, ga, gb)

        theta0 = chart.pack(state.alpha_red, state.beta_red)
        phi = theta0[: sub.p - 1]
        nrm = float(np.linalg.norm(phi))
        if nrm > CHART_CAP:
            theta0[: sub.p - 1] *= (CHART_CAP - 1e-9) / nrm
        # the ridge curvature n*c is known and can be enormous for shrinking
        # coordinates; precondition or BFGS stalls on the stiff directions
        curv_phi = n * (c_a[1:] + c_a[0] + 1.0)
        curv_beta = n * (c_b + 1.0)
        hinv0 = 1.0 / np.concatenate([curv_phi, curv_beta])
        res = minimize(fun_grad, theta0, fun=fun, valid=chart.valid,
                       gtol=0.5 * gtol, steptol=tol, max_iter=inner_max_iter,
                       hinv0=hinv0)
        alpha_new, beta_new = chart.unpack(res.x)
        state = _ActiveState(state.order, state.bidx, alpha_new, beta_new)

        if keep_trace:
            af, bf = state.ambient(p, q)
            lp = 0.5 * _Workspace(data, h, kernel).q_value(af, bf) + n * (
                sum(scad_value(ScadPenalty(plan.lambda1[j], plan.a), abs(af[j]))
                    for j in range(p) if plan.lambda1[j] > 0)
                + sum(scad_value(ScadPenalty(plan.lambda2[k], plan.a), abs(bf[k]))
                      for k in range(q) if plan.lambda2[k] > 0))
            lp_trace.append(float(lp))

        cur = np.concatenate(state.ambient(p, q))
        # coordinates still travelling toward zero must not stop the outer
        # loop; they cross the threshold within a few more contractions
        pending_band = 1e3 * thr
        pending = (len(state.order) > 1 and np.any(
            (np.abs(state.alpha_red[1:]) < pending_band)
            & (plan.lambda1[state.order[1:]] > 0))) or (
            len(state.bidx) > 0 and np.any(
                (np.abs(state.beta_red) < pending_band)
                & (plan.lambda2[state.bidx] > 0)))
        if (not support_changed and not pending
                and np.max(np.abs(cur - prev)) < OUTER_RTOL * (1.0 + np.max(np.abs(prev)))):
            converged = True
            break
        prev = cur

    # final threshold pass
    keep_a = [0] + [j for j in range(1, len(state.order))
                    if abs(state.alpha_red[j]) >= thr
                    or plan.lambda1[state.order[j]] == 0.0]
    keep_b = [k for k in range(len(state.bidx))
              if abs(state.beta_red[k]) >= thr
              or plan.lambda2[state.bidx[k]] == 0.0]
    state = _ActiveState([state.order[j] for j in keep_a],
                         [state.bidx[k] for k in keep_b],
                         state.alpha_red[keep_a], state.beta_red[keep_b])
    state.alpha_red = state.alpha_red / np.linalg.norm(state.alpha_red)
    state.reroot()

    alpha, beta = _final_zeta(state, p, q)
    support_a = np.abs(alpha) > 0
    support_b = np.abs(beta) > 0
    df = int(support_a.sum() + support_b.sum())
    sub = data.subset(np.asarray(state.order, dtype=int),
                      np.asarray(state.bidx, dtype=int) if state.bidx else np.zeros(0, dtype=int))
    qv = _Workspace(sub, h, kernel).q_value(state.alpha_red, state.beta_red)
    if alpha[0] > 0:
        zeta = make_zeta(alpha, beta)
    else:
        # alpha_1 was frozen to zero: the published sign rule (alpha_1 > 0)
        # cannot apply; keep the first nonzero coordinate positive instead
        from plsim.model import CoefParam, IndexParam

        zeta = ZetaParam(IndexParam(alpha, alpha[1:]), CoefParam(beta))
    result = PenalizedFit(zeta, df, float(qv), support_a, support_b,
                          outer, converged or outer < outer_max,
                          tuple(lp_trace))
    if result.all_zero:
        raise AllCoefficientsZero(fit=result)
    return result


@dataclass(frozen=True)
class PathPoint:
    lam: float
    zeta: ZetaParam
    df: int
    mse: float
    bic: float
    aic: float
    support_alpha: np.ndarray
    support_beta: np.ndarray
    collapsed: bool = False


@dataclass(frozen=True)
class ScadPath:
    lambdas: np.ndarray
    points: tuple
    selected_index: int
    criterion: str

    @property
    def selected(self):
        return self.points[self.selected_index]

    @property
    def selected_support(self):
        pt = self.selected
        return (np.nonzero(pt.support_alpha)[0], np.nonzero(pt.support_beta)[0])

    def to_dict(self):
        return {
            "criterion": self.criterion,
            "selected_index": int(self.selected_index),
            "lambda_selected": float(self.lambdas[self.selected_index]),
            "path": [
                {
                    "lambda": float(pt.lam),
                    "alpha": list(pt.zeta.alpha),
                    "beta": list(pt.zeta.beta),
                    "df": int(pt.df),
                    "mse": pt.mse,
                    "bic": pt.bic,
                    "aic": pt.aic,
                    "collapsed": bool(pt.collapsed),
                }
                for pt in self.points
            ],
        }


def bic_criterion(mse, n, df):
    return float(np.log(mse) + (np.log(n) / n) * df)


def aic_criterion(mse, n, df, pq, constant="2pq"):
    c = 2.0 * pq if constant == "2pq" else 2.0
    return float(np.log(mse) + (c / n) * df)


def bic_search(data, unpenalized, grid_size=50, criterion="bic", *,
               mode="both", aic_constant="2pq", tol=1e-6):
    """SCAD path over an even lambda grid on [0, lambda_max] with BIC/AIC
    selection.

    lambda_max is found by doubling from 1 until the penalized fit collapses
    (or 20 doublings).  Grid fits are warm-started from the previous
    (smaller-lambda) solution; mse(lambda) = Q(zeta_lambda)/n.  Ties in the
    criterion go to the smaller lambda.  The AIC variant replaces log(n)
    with 2(p+q) (set aic_constant="classic" for the textbook constant 2).
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if criterion not in ("bic", "aic"):
        raise ValueError("criterion must be 'bic' or 'aic'")
    init = unpenalized.zeta_hat
    h = unpenalized.h
    kernel = unpenalized.kernel
    n, p, q = data.n, data.p, data.q

    lam_max = 1.0
    for _ in range(20):
        plan = lambda_plan(lam_max, unpenalized, mode)
        try:
            penalized_fit(data, plan, init, h, kernel, tol=tol)
        except AllCoefficientsZero:
            break
        lam_max *= 2.0

    grid = np.linspace(0.0, lam_max, grid_size)
    points = []
    warm = init
    for lam in grid:
        plan = lambda_plan(float(lam), unpenalized, mode)
        collapsed = False
        try:
            pf = penalized_fit(data, plan, warm, h, kernel, tol=tol)
            warm = pf.zeta
        except AllCoefficientsZero as exc:
            pf = exc.fit
            collapsed = True
            # keep warm-starting later points from the last live solution
        mse = pf.q_value / n
        points.append(PathPoint(
            float(lam), pf.zeta, pf.df, float(mse),
            bic_criterion(mse, n, pf.df),
            aic_criterion(mse, n, pf.df, p + q, aic_constant),
            pf.support_alpha, pf.support_beta, collapsed))
    scores = np.array([pt.bic if criterion == "bic" else pt.aic for pt in points])
    selected = int(np.argmin(scores))
    return ScadPath(grid, tuple(points), selected, criterion)
