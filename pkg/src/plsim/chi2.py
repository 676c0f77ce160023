"""Chi-square distribution machinery with real (non-integer) degrees of
freedom and noncentrality, built on the regularized lower incomplete gamma.

The noncentral CDF is the Poisson mixture
    F(x; df, nc) = sum_k  e^{-nc/2} (nc/2)^k / k!  *  P(df/2 + k, x/2)
summed until the remaining mass is negligible.
"""

import math

from scipy.special import gammainc

SERIES_TOL = 1e-14


def chi2_cdf(x, df, noncentrality=0.0):
    """CDF at x; df > 0 may be non-integer, noncentrality >= 0."""
    if df <= 0:
        raise ValueError("df must be positive")
    if noncentrality < 0:
        raise ValueError("noncentrality must be nonnegative")
    x = float(x)
    if x <= 0.0:
        return 0.0
    if noncentrality == 0.0:
        return float(gammainc(df / 2.0, x / 2.0))
    lam = noncentrality / 2.0
    # poisson weights forward from k=0; do not stop before the mode
    logw = -lam
    total = 0.0
    k = 0
    while True:
        w = math.exp(logw)
        term = w * float(gammainc(df / 2.0 + k, x / 2.0))
        total += term
        k += 1
        if term < SERIES_TOL and k > lam:
            break
        if k > 100000:
            break
        logw += math.log(lam) - math.log(k)
    return min(total, 1.0)


def chi2_sf(x, df, noncentrality=0.0):
    return 1.0 - chi2_cdf(x, df, noncentrality)


def chi2_quantile(prob, df, noncentrality=0.0, tol=1e-10):
    """Inverse CDF by bisection (monotone in x)."""
    if not 0.0 <= prob < 1.0:
        raise ValueError("prob must be in [0, 1)")
    if prob == 0.0:
        return 0.0
    hi = max(df + noncentrality, 1.0)
    while chi2_cdf(hi, df, noncentrality) < prob:
        hi *= 2.0
        if hi > 1e12:
            break
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, df, noncentrality) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
