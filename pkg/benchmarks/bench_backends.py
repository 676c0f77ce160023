"""Benchmark the compiled smoothing kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_backends.py
"""

import time

import numpy as np

from plsim import _reference

try:
    from plsim import _speedups
except ImportError:
    _speedups = None


def instance(n, d, p, seed=0, h=0.2):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(0, 1, n))
    resp = np.ascontiguousarray(rng.normal(size=(n, d)))
    z = np.ascontiguousarray(rng.normal(size=(n, p)))
    lo = np.searchsorted(lam, lam - h, side="right").astype(np.int64)
    hi = np.searchsorted(lam, lam + h, side="left").astype(np.int64)
    return lam, resp, z, lo, hi, h


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    print(f"{'routine':<18} {'n':>6} {'python':>12} {'cython':>12} {'speedup':>8}")
    for n in (200, 1000, 4000):
        lam, resp, z, lo, hi, h = instance(n, d=4, p=4)
        y = np.ascontiguousarray(resp[:, 0])
        rows = [
            ("llr_batch", lambda m: m.llr_batch(lam, lam, resp, lo, hi, h, 0, n)),
            ("llr_alpha_grad", lambda m: m.llr_alpha_grad(lam, y, z, lo, hi, h, 0, n)),
            ("loo_press", lambda m: m.loo_press(lam, y, lo, hi, h, 0, n)),
        ]
        for name, call in rows:
            t_py = timeit(lambda: call(_reference))
            if _speedups is not None:
                t_c = timeit(lambda: call(_speedups))
                print(f"{name:<18} {n:>6} {t_py*1e3:>10.2f}ms {t_c*1e3:>10.2f}ms "
                      f"{t_py/t_c:>7.1f}x")
            else:
                print(f"{name:<18} {n:>6} {t_py*1e3:>10.2f}ms {'-':>12} {'-':>8}")


def bench_fit():
    from plsim.model import Dataset
    from plsim.profile import fit_plsim

    rng = np.random.default_rng(3)
    n = 400
    z = rng.uniform(0, 1, (n, 4))
    x = rng.normal(size=(n, 4))
    alpha = np.array([0.5, 0.5, 0.5, 0.5])
    y = np.sin(2.5 * (z @ alpha)) + x @ np.array([1.0, -0.5, 0.25, 0.0]) \
        + 0.1 * rng.normal(size=n)
    data = Dataset(y, z, x)

    import plsim.backend as bk

    results = {}
    for label, mod in (("python", _reference), ("cython", _speedups)):
        if mod is None:
            continue
        bk.llr_batch = mod.llr_batch
        bk.llr_alpha_grad = mod.llr_alpha_grad
        bk.loo_press = mod.loo_press
        t0 = time.perf_counter()
        fit = fit_plsim(data)
        results[label] = (time.perf_counter() - t0, fit.q_value)
    if "cython" in results and "python" in results:
        tp, qp = results["python"]
        tc, qc = results["cython"]
        print(f"\nfull fit (n=400, p=q=4): python {tp:.2f}s, cython {tc:.2f}s, "
              f"speedup {tp/tc:.1f}x; |Q_py - Q_cy| = {abs(qp-qc):.2e}")
    # restore the import-time selection
    from importlib import reload

    reload(bk)


if __name__ == "__main__":
    print(f"compiled extension available: {_speedups is not None}\n")
    bench_kernels()
    bench_fit()
