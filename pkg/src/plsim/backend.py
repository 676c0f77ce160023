"""Selects the smoothing backend at import time.

The compiled extension ``plsim._speedups`` is preferred; the pure-numpy
``plsim._reference`` is the fallback.  Override with the environment
variable ``PLSIM_BACKEND``:

* ``c`` / ``cython`` / ``compiled``  -- require the extension, fail if absent
* ``py`` / ``python`` / ``numpy``    -- force the pure-python fallback

``benchmarks/bench_backends.py`` compares the two.
"""

import os

_requested = os.environ.get("PLSIM_BACKEND", "").strip().lower()

if _requested in ("py", "python", "numpy"):
    from plsim import _reference as _impl

    BACKEND = "python"
elif _requested in ("c", "cython", "compiled"):
    from plsim import _speedups as _impl  # noqa: F401  (raises if not built)

    BACKEND = "cython"
elif _requested:
    raise RuntimeError(f"unknown PLSIM_BACKEND value: {_requested!r}")
else:
    try:
        from plsim import _speedups as _impl

        BACKEND = "cython"
    except ImportError:
        from plsim import _reference as _impl

        BACKEND = "python"

llr_batch = _impl.llr_batch
llr_alpha_grad = _impl.llr_alpha_grad
loo_press = _impl.loo_press
