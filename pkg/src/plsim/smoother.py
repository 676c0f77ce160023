"""Local linear link estimation, conditional-mean smoothing, bandwidth CV.

The local linear fit at u solves the kernel-weighted least-squares problem
for (level, slope) with weights K_h(lam_i - u); the level reproduces affine
functions exactly whenever at least two distinct points fall in the window.
A small ridge is added to the slope diagonal when the normal-equation
determinant nearly vanishes (duplicated design points), instead of trimming.
"""

from dataclasses import dataclass

import numpy as np

from plsim import backend
from plsim.exceptions import AllBandwidthsDegenerate, DegenerateNeighborhood
from plsim.kernels import get_kernel


@dataclass(frozen=True)
class Bandwidth:
    h: float
    source: str = "fixed"  # "fixed" | "cross_validated"

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {self.h}")


@dataclass(frozen=True)
class LocalFit:
    a_hat: float
    b_hat: float
    denom: float
    effective_n: int


def _windows(u, lam_sorted, h):
    lo = np.searchsorted(lam_sorted, u - h, side="right")
    hi = np.searchsorted(lam_sorted, u + h, side="left")
    return lo.astype(np.int64), hi.astype(np.int64)


def smooth_batch(u, lam, resp, h, kernel, n_ref=None):
    """Local linear level/slope of each resp column at every u.

    Returns (a (m,d), b (m,d), denom (m,), effn (m,)).  Rows of resp are
    matched to lam; u may be arbitrary points.
    """
    u = np.ascontiguousarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    resp = np.asarray(resp, dtype=float)
    if resp.ndim == 1:
        resp = resp[:, None]
    kernel = get_kernel(kernel)
    n = lam.shape[0]
    order = np.argsort(lam, kind="stable")
    lam_s = np.ascontiguousarray(lam[order])
    resp_s = np.ascontiguousarray(resp[order])
    lo, hi = _windows(u, lam_s, h)
    return backend.llr_batch(u, lam_s, resp_s, lo, hi, float(h),
                             kernel.kid, n_ref or n)


def local_linear_fit(u, lam, ystar, h, kernel):
    """LocalFit at a single point; raises DegenerateNeighborhood when fewer
    than two points carry weight."""
    h = h.h if isinstance(h, Bandwidth) else float(h)
    a, b, den, effn = smooth_batch(np.array([float(u)]), lam, ystar, h, kernel)
    if effn[0] < 2 or den[0] <= 0.0:
        raise DegenerateNeighborhood(
            f"only {int(effn[0])} points in the kernel window at u={u:.6g} "
            f"(h={h:.6g} too small)")
    return LocalFit(float(a[0, 0]), float(b[0, 0]), float(den[0]), int(effn[0]))


def eta_hat(u, zeta, data, h, kernel):
    """Link level/slope estimate at u for the index and coefficients in zeta."""
    lam = data.z @ zeta.alpha
    ystar = data.y - data.x @ zeta.beta if data.q else data.y
    return local_linear_fit(u, lam, ystar, h, kernel)


def conditional_mean_smooth(xi, lam, h, kernel):
    """Leave-in local linear estimate of E(xi | lam) at every sample point,
    one column at a time; returns an (n, d) matrix."""
    h = h.h if isinstance(h, Bandwidth) else float(h)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    lam = np.asarray(lam, dtype=float)
    a, _, den, effn = smooth_batch(lam, lam, xi, h, kernel)
    if np.any(effn < 2) or np.any(den <= 0.0):
        i = int(np.argmax((effn < 2) | (den <= 0.0)))
        raise DegenerateNeighborhood(
            f"kernel window at lam[{i}]={lam[i]:.6g} has {int(effn[i])} points")
    return a


def cv_score(lam, ystar, h, kernel, n_ref=None):
    """Mean leave-one-out squared prediction error; +inf when any point's
    deleted fit is degenerate (bandwidth effectively too small)."""
    lam = np.asarray(lam, dtype=float)
    ystar = np.ascontiguousarray(ystar, dtype=float)
    kernel = get_kernel(kernel)
    n = lam.shape[0]
    order = np.argsort(lam, kind="stable")
    lam_s = np.ascontiguousarray(lam[order])
    ys_s = np.ascontiguousarray(ystar[order])
    lo, hi = _windows(lam_s, lam_s, h)
    press, ok = backend.loo_press(lam_s, ys_s, lo, hi, float(h), kernel.kid,
                                  n_ref or n)
    if not np.all(ok):
        return np.inf
    return float(press.mean())


def cv_bandwidth(data, zeta, grid, kernel):
    """Grid member minimizing the LOO score at fixed zeta; ties broken toward
    the larger h.  Raises AllBandwidthsDegenerate if no grid point survives."""
    hs = [g.h if isinstance(g, Bandwidth) else float(g) for g in grid]
    if not hs:
        raise ValueError("bandwidth grid is empty")
    lam = data.z @ zeta.alpha
    ystar = data.y - data.x @ zeta.beta if data.q else data.y
    scores = np.array([cv_score(lam, ystar, h, kernel) for h in hs])
    if not np.any(np.isfinite(scores)):
        raise AllBandwidthsDegenerate(
            "every bandwidth in the grid leaves some point without neighbors")
    # ties toward the larger h: scan the grid from the top
    desc = np.argsort(-np.asarray(hs), kind="stable")
    best = min(desc, key=lambda i: (scores[i],))
    return Bandwidth(hs[int(best)], source="cross_validated")


def default_grid(lam, size=20, lower=0.05, upper=0.5):
    """Log-spaced bandwidth grid over (lower..upper) x range of the index."""
    r = float(np.max(lam) - np.min(lam))
    if r <= 0:
        raise AllBandwidthsDegenerate("index has zero range")
    return list(np.exp(np.linspace(np.log(lower * r), np.log(upper * r), size)))
