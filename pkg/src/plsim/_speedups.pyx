# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops for local linear smoothing.

All routines expect the data sorted by the index variable ``lam`` and the
per-evaluation-point window bounds ``lo``/``hi`` precomputed with
``searchsorted`` (strict window: |lam_j - u| < h).  The pure-python twin of
this module is ``plsim._reference``; the two must stay behaviourally
identical.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

# ridge safeguard constants (shared with plsim._reference)
DEF RIDGE_TRIGGER = 1e-6
DEF RIDGE_SCALE = 1e-6


cdef inline double kval(int kid, double t) noexcept nogil:
    cdef double s = 1.0 - t * t
    if s <= 0.0:
        return 0.0
    if kid == 0:        # triweight
        return 1.09375 * s * s * s
    elif kid == 1:      # quartic
        return 0.9375 * s * s
    else:               # epanechnikov
        return 0.75 * s


cdef inline double kder(int kid, double t) noexcept nogil:
    cdef double s = 1.0 - t * t
    if s <= 0.0:
        return 0.0
    if kid == 0:
        return -6.5625 * t * s * s
    elif kid == 1:
        return -3.75 * t * s
    else:
        return -1.5 * t


def llr_batch(double[::1] u, double[::1] lam, double[:, ::1] resp,
              long[::1] lo, long[::1] hi, double h, int kid, long n_ref):
    """Local linear fit of every resp column at each u.

    Returns (ahat (m,d), bhat (m,d), denom (m,), effn (m,)) where denom is
    the (possibly ridged) normal-equation determinant and effn the count of
    points with nonzero kernel weight.
    """
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t d = resp.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a_out = np.empty((m, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b_out = np.empty((m, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] den_out = np.empty(m)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] eff_out = np.empty(m, dtype=np.int64)
    cdef double[:, ::1] av = a_out
    cdef double[:, ::1] bv = b_out
    cdef double[::1] dv = den_out
    cdef long[::1] ev = eff_out

    cdef Py_ssize_t i, j, c
    cdef double ui, dl, k, s0, s1, s2, s2r, det, t0, t1, trig
    with nogil:
        for i in range(m):
            ui = u[i]
            s0 = 0.0; s1 = 0.0; s2 = 0.0
            for j in range(lo[i], hi[i]):
                dl = lam[j] - ui
                k = kval(kid, dl / h) / h
                s0 += k
                s1 += k * dl
                s2 += k * dl * dl
            ev[i] = hi[i] - lo[i]
            det = s0 * s2 - s1 * s1
            trig = RIDGE_TRIGGER * s2 * (h * h / n_ref)
            s2r = s2
            if det <= trig:
                s2r = s2 + RIDGE_SCALE * h * h
                det = s0 * s2r - s1 * s1
            dv[i] = det
            if ev[i] < 2 or det <= 0.0:
                for c in range(d):
                    av[i, c] = 0.0
                    bv[i, c] = 0.0
                continue
            for c in range(d):
                t0 = 0.0; t1 = 0.0
                for j in range(lo[i], hi[i]):
                    dl = lam[j] - ui
                    k = kval(kid, dl / h) / h
                    t0 += k * resp[j, c]
                    t1 += k * dl * resp[j, c]
                av[i, c] = (s2r * t0 - s1 * t1) / det
                bv[i, c] = (s0 * t1 - s1 * t0) / det
    return a_out, b_out, den_out, eff_out


def llr_alpha_grad(double[::1] lam, double[::1] ystar, double[:, ::1] z,
                   long[::1] lo, long[::1] hi, double h, int kid, long n_ref):
    """Exact gradient of Q = sum_i (ystar_i - ahat(lam_i))^2 w.r.t. alpha.

    Differentiates through both the evaluation point and the kernel weights
    (the ridge trigger is treated as locally constant).  lam, ystar and the
    rows of z must share the sorted order.  Returns (grad (p,), Q).
    """
    cdef Py_ssize_t n = lam.shape[0]
    cdef Py_ssize_t p = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad = np.zeros(p)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gz = np.zeros(p)
    cdef double[::1] gv = grad
    cdef double[::1] gzv = gz
    cdef double q = 0.0
    cdef Py_ssize_t i, j, c
    cdef double ui, dl, k, kp, s0, s1, s2, s2r, det, t0, t1, trig
    cdef double a, r, gsum, gj, aa, bb
    with nogil:
        for i in range(n):
            ui = lam[i]
            if hi[i] - lo[i] < 2:
                continue
            s0 = 0.0; s1 = 0.0; s2 = 0.0; t0 = 0.0; t1 = 0.0
            for j in range(lo[i], hi[i]):
                dl = lam[j] - ui
                k = kval(kid, dl / h) / h
                s0 += k
                s1 += k * dl
                s2 += k * dl * dl
                t0 += k * ystar[j]
                t1 += k * dl * ystar[j]
            det = s0 * s2 - s1 * s1
            trig = RIDGE_TRIGGER * s2 * (h * h / n_ref)
            s2r = s2
            if det <= trig:
                s2r = s2 + RIDGE_SCALE * h * h
                det = s0 * s2r - s1 * s1
            if det <= 0.0:
                continue
            a = (s2r * t0 - s1 * t1) / det
            r = ystar[i] - a
            q += r * r
            gsum = 0.0
            for c in range(p):
                gzv[c] = 0.0
            for j in range(lo[i], hi[i]):
                dl = lam[j] - ui
                k = kval(kid, dl / h) / h
                kp = kder(kid, dl / h) / (h * h)
                aa = (dl * dl * t0 + s2r * ystar[j] - dl * t1 - s1 * dl * ystar[j]
                      - a * (s2r + s0 * dl * dl - 2.0 * s1 * dl)) / det
                bb = (2.0 * dl * t0 - t1 - s1 * ystar[j]
                      - a * (2.0 * s0 * dl - 2.0 * s1)) / det
                gj = kp * aa + k * bb
                gsum += gj
                for c in range(p):
                    gzv[c] += gj * z[j, c]
            # dQ/dalpha += -2 r * (sum_j g_j z_j - gsum * z_i)
            for c in range(p):
                gv[c] += -2.0 * r * (gzv[c] - gsum * z[i, c])
    return grad, q


def loo_press(double[::1] lam, double[::1] ystar,
              long[::1] lo, long[::1] hi, double h, int kid, long n_ref):
    """Leave-one-out squared prediction errors of the local linear fit.

    Evaluation point i is deleted from its own fit; Delta_i = 0 so only the
    zeroth moments change.  Returns (press (n,), ok (n,) uint8).
    """
    cdef Py_ssize_t n = lam.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] press = np.zeros(n)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.zeros(n, dtype=np.uint8)
    cdef double[::1] pv = press
    cdef cnp.uint8_t[::1] okv = ok
    cdef Py_ssize_t i, j
    cdef double ui, dl, k, s0, s1, s2, s2r, det, t0, t1, k0, trig, pred
    with nogil:
        for i in range(n):
            ui = lam[i]
            if hi[i] - lo[i] - 1 < 2:
                continue
            s0 = 0.0; s1 = 0.0; s2 = 0.0; t0 = 0.0; t1 = 0.0
            for j in range(lo[i], hi[i]):
                if j == i:
                    continue
                dl = lam[j] - ui
                k = kval(kid, dl / h) / h
                s0 += k
                s1 += k * dl
                s2 += k * dl * dl
                t0 += k * ystar[j]
                t1 += k * dl * ystar[j]
            det = s0 * s2 - s1 * s1
            trig = RIDGE_TRIGGER * s2 * (h * h / n_ref)
            s2r = s2
            if det <= trig:
                s2r = s2 + RIDGE_SCALE * h * h
                det = s0 * s2r - s1 * s1
            if det <= 0.0:
                continue
            pred = (s2r * t0 - s1 * t1) / det
            pv[i] = (ystar[i] - pred) * (ystar[i] - pred)
            okv[i] = 1
    return press, ok
