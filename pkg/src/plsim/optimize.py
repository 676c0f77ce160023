"""Damped quasi-Newton minimizer with Armijo backtracking.

Used for the profile least-squares objective and its ridge-penalized
variants.  Steps that would leave the feasible region (the open unit ball of
the sphere chart) are shrunk by backtracking, which preserves descent.
BFGS updates are skipped when the curvature condition fails, so the inverse
Hessian stays positive definite.
"""

from dataclasses import dataclass

import numpy as np

ARMIJO_C1 = 1e-4
MIN_STEP = 1e-14


@dataclass
class OptResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    trace: tuple = ()  # accepted objective values, f(x0) first

    @property
    def gradient_norm(self):
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def minimize(fun_grad, x0, *, fun=None, valid=None, gtol=1e-8, steptol=1e-10,
             max_iter=200, hinv0=None):
    """Minimize f; fun_grad(x) -> (f, g).  fun(x) -> f is an optional cheap
    objective-only evaluator for the line search.  valid(x) keeps iterates in
    the feasible region.  hinv0, when given, is a diagonal initial inverse
    Hessian (preconditioner for stiff ridge-penalized problems)."""
    x = np.asarray(x0, dtype=float).copy()
    if valid is not None and not valid(x):
        raise ValueError("infeasible starting point")
    f_only = fun if fun is not None else (lambda xx: fun_grad(xx)[0])
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise ValueError("objective not finite at the starting point")
    n = x.size
    if n == 0:
        return OptResult(x, f, g, 0, True, "nothing to optimize", (f,))

    def fresh_hinv():
        if hinv0 is not None:
            return np.diag(np.asarray(hinv0, dtype=float))
        return np.eye(n)

    hinv = fresh_hinv()
    scaled = hinv0 is not None
    it = 0
    message = "max_iter reached"
    converged = False
    trace = [f]
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            converged, message = True, "gradient tolerance reached"
            it -= 1
            break
        d = -hinv @ g
        slope = float(d @ g)
        if not np.isfinite(slope) or slope >= 0:
            hinv = fresh_hinv()
            scaled = hinv0 is not None
            d = -hinv @ g
            slope = float(d @ g)
            if slope >= 0:
                converged, message = True, "zero gradient direction"
                break
        t = 1.0
        if valid is not None:
            while t > MIN_STEP and not valid(x + t * d):
                t *= 0.5
        accepted = False
        while t > MIN_STEP:
            xn = x + t * d
            fn = f_only(xn)
            if np.isfinite(fn) and fn <= f + ARMIJO_C1 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged, message = True, "line search step below tolerance"
            break
        fn, gn = fun_grad(xn)
        s = xn - x
        yv = gn - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv)) and sy > 0:
            if not scaled:
                hinv = (sy / float(yv @ yv)) * np.eye(n)
                scaled = True
            rho = 1.0 / sy
            hs = hinv @ yv
            # BFGS inverse update (Sherman-Morrison form)
            hinv = (hinv - rho * (np.outer(s, hs) + np.outer(hs, s))
                    + rho * rho * float(yv @ hs) * np.outer(s, s)
                    + rho * np.outer(s, s))
        step = float(np.linalg.norm(s))
        x, f, g = xn, fn, gn
        trace.append(f)
        if step < steptol * (1.0 + float(np.linalg.norm(x))):
            converged, message = True, "step tolerance reached"
            break
    return OptResult(x, f, g, it, converged, message, tuple(trace))
