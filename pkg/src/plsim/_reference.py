"""Pure-numpy twin of the compiled smoothing loops in ``plsim._speedups``.

Used when the extension is not built (or when forced via PLSIM_BACKEND).
Function signatures and ridge/degeneracy semantics match the compiled
versions; floating point results agree to roundoff, not bitwise, because the
summation order differs.
"""

import numpy as np

RIDGE_TRIGGER = 1e-6
RIDGE_SCALE = 1e-6

_CHUNK = 256  # evaluation points per block, bounds the (chunk, n) temporaries


def _kval(kid, t):
    s = 1.0 - t * t
    s = np.where(s > 0.0, s, 0.0)
    if kid == 0:
        return 1.09375 * s**3
    elif kid == 1:
        return 0.9375 * s**2
    return 0.75 * s


def _kder(kid, t):
    s = 1.0 - t * t
    inside = s > 0.0
    s = np.where(inside, s, 0.0)
    if kid == 0:
        return np.where(inside, -6.5625 * t * s**2, 0.0)
    elif kid == 1:
        return np.where(inside, -3.75 * t * s, 0.0)
    return np.where(inside, -1.5 * t, 0.0)


def _moments(u, lam, h, kid):
    delta = lam[None, :] - u[:, None]
    inside = np.abs(delta) < h
    k = np.where(inside, _kval(kid, delta / h) / h, 0.0)
    return delta, inside, k


def llr_batch(u, lam, resp, lo, hi, h, kid, n_ref):
    m = u.shape[0]
    d = resp.shape[1]
    a = np.zeros((m, d))
    b = np.zeros((m, d))
    den = np.zeros(m)
    effn = (hi - lo).astype(np.int64)
    for start in range(0, m, _CHUNK):
        sl = slice(start, min(start + _CHUNK, m))
        delta, _, k = _moments(u[sl], lam, h, kid)
        s0 = k.sum(1)
        s1 = (k * delta).sum(1)
        s2 = (k * delta * delta).sum(1)
        det = s0 * s2 - s1 * s1
        ridged = det <= RIDGE_TRIGGER * s2 * (h * h / n_ref)
        s2r = s2 + np.where(ridged, RIDGE_SCALE * h * h, 0.0)
        det = s0 * s2r - s1 * s1
        t0 = k @ resp
        t1 = (k * delta) @ resp
        good = (effn[sl] >= 2) & (det > 0.0)
        safe = np.where(good, det, 1.0)
        a[sl] = np.where(good[:, None], (s2r[:, None] * t0 - s1[:, None] * t1) / safe[:, None], 0.0)
        b[sl] = np.where(good[:, None], (s0[:, None] * t1 - s1[:, None] * t0) / safe[:, None], 0.0)
        den[sl] = det
    return a, b, den, effn


def llr_alpha_grad(lam, ystar, z, lo, hi, h, kid, n_ref):
    n, p = z.shape
    grad = np.zeros(p)
    q = 0.0
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(start + _CHUNK, n))
        delta, inside, k = _moments(lam[sl], lam, h, kid)
        kp = np.where(inside, _kder(kid, delta / h) / (h * h), 0.0)
        s0 = k.sum(1)
        s1 = (k * delta).sum(1)
        s2 = (k * delta * delta).sum(1)
        det = s0 * s2 - s1 * s1
        ridged = det <= RIDGE_TRIGGER * s2 * (h * h / n_ref)
        s2r = s2 + np.where(ridged, RIDGE_SCALE * h * h, 0.0)
        det = s0 * s2r - s1 * s1
        t0 = k @ ystar
        t1 = (k * delta) @ ystar
        good = ((hi[sl] - lo[sl]) >= 2) & (det > 0.0)
        safe = np.where(good, det, 1.0)
        a = (s2r * t0 - s1 * t1) / safe
        r = np.where(good, ystar[sl] - a, 0.0)
        q += float(r @ r)
        aa = (delta**2 * t0[:, None] + s2r[:, None] * ystar[None, :]
              - delta * t1[:, None] - s1[:, None] * delta * ystar[None, :]
              - a[:, None] * (s2r[:, None] + s0[:, None] * delta**2 - 2.0 * s1[:, None] * delta)
              ) / safe[:, None]
        bb = (2.0 * delta * t0[:, None] - t1[:, None] - s1[:, None] * ystar[None, :]
              - a[:, None] * (2.0 * s0[:, None] * delta - 2.0 * s1[:, None])) / safe[:, None]
        g = np.where(inside, kp * aa + k * bb, 0.0)
        gsum = g.sum(1)
        gz = g @ z
        dmda = gz - gsum[:, None] * z[sl]
        grad += -2.0 * ((r[:, None] * dmda) * good[:, None]).sum(0)
    return grad, q


def loo_press(lam, ystar, lo, hi, h, kid, n_ref):
    n = lam.shape[0]
    press = np.zeros(n)
    ok = np.zeros(n, dtype=np.uint8)
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(start + _CHUNK, n))
        delta, _, k = _moments(lam[sl], lam, h, kid)
        # delete the evaluation point itself: Delta_ii = 0, so only the
        # zeroth-order moments change
        rows = np.arange(sl.start, sl.stop)
        kself = k[rows - sl.start, rows]
        s0 = k.sum(1) - kself
        s1 = (k * delta).sum(1)
        s2 = (k * delta * delta).sum(1)
        t0 = k @ ystar - kself * ystar[sl]
        t1 = (k * delta) @ ystar
        det = s0 * s2 - s1 * s1
        ridged = det <= RIDGE_TRIGGER * s2 * (h * h / n_ref)
        s2r = s2 + np.where(ridged, RIDGE_SCALE * h * h, 0.0)
        det = s0 * s2r - s1 * s1
        good = ((hi[sl] - lo[sl] - 1) >= 2) & (det > 0.0)
        safe = np.where(good, det, 1.0)
        pred = (s2r * t0 - s1 * t1) / safe
        press[sl] = np.where(good, (ystar[sl] - pred) ** 2, 0.0)
        ok[sl] = good.astype(np.uint8)
    return press, ok
