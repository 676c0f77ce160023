"""Compactly supported smoothing kernels and their constants.

The default is the triweight kernel: among the shipped polynomial kernels it
is the only one that is twice continuously differentiable on the whole line
with a Lipschitz second derivative (the quartic's second derivative jumps at
|u| = 1, the Epanechnikov's first derivative does).  Quartic and Epanechnikov
are shipped for comparison with that caveat.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class Kernel:
    name: str
    kid: int          # id used by the compiled backend
    k0: float         # K(0)
    ik2: float        # integral of K^2 over (-1, 1)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        s = 1.0 - u * u
        s = np.where(s > 0.0, s, 0.0)
        if self.kid == 0:
            return 1.09375 * s**3
        elif self.kid == 1:
            return 0.9375 * s**2
        return 0.75 * s

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        s = 1.0 - u * u
        inside = s > 0.0
        s = np.where(inside, s, 0.0)
        if self.kid == 0:
            return np.where(inside, -6.5625 * u * s**2, 0.0)
        elif self.kid == 1:
            return np.where(inside, -3.75 * u * s, 0.0)
        return np.where(inside, -1.5 * u, 0.0)

    def r_k(self, variant="printed"):
        """Normalizing constant of the link test.

        variant="printed": since the kernel integrates to 1 (and so does its
        self-convolution), the denominator integral equals 1/2 and
        r_K = 2 K(0) - int K^2.  variant="squared" uses the squared-integrand
        denominator from the generalized likelihood-ratio literature.
        """
        num = self.k0 - 0.5 * self.ik2
        if variant == "printed":
            return num / 0.5
        elif variant == "squared":
            return num / self._conv_denom()
        raise ValueError(f"unknown r_K variant: {variant!r}")

    def _conv_denom(self):
        def selfconv(t):
            val, _ = quad(lambda s: float(self(s)) * float(self(t - s)), -1.0, 1.0,
                          limit=200)
            return val

        val, _ = quad(lambda t: (float(self(t)) - 0.5 * selfconv(t)) ** 2, -2.0, 2.0,
                      limit=200)
        return val


TRIWEIGHT = Kernel("triweight", 0, 35.0 / 32.0, 350.0 / 429.0)
QUARTIC = Kernel("quartic", 1, 15.0 / 16.0, 5.0 / 7.0)
EPANECHNIKOV = Kernel("epanechnikov", 2, 3.0 / 4.0, 3.0 / 5.0)

KERNELS = {k.name: k for k in (TRIWEIGHT, QUARTIC, EPANECHNIKOV)}
DEFAULT_KERNEL = TRIWEIGHT


def get_kernel(name_or_kernel):
    if isinstance(name_or_kernel, Kernel):
        return name_or_kernel
    try:
        return KERNELS[str(name_or_kernel).lower()]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name_or_kernel!r}; choose from {sorted(KERNELS)}"
        ) from None


def moment_checks(kernel):
    """Quadrature values of (int K, int u K) for validation tests."""
    kernel = get_kernel(kernel)
    m0, _ = quad(lambda u: float(kernel(u)), -1.0, 1.0, limit=200)
    m1, _ = quad(lambda u: u * float(kernel(u)), -1.0, 1.0, limit=200)
    return m0, m1
