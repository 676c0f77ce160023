import numpy as np
import pytest
from scipy.integrate import quad

from plsim.kernels import KERNELS, get_kernel, moment_checks


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_density_moments_by_quadrature(name):
    m0, m1 = moment_checks(name)
    assert abs(m0 - 1.0) < 1e-8
    assert abs(m1) < 1e-8


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_compact_support(name):
    k = get_kernel(name)
    assert k(1.0) == 0.0
    assert k(-1.0) == 0.0
    assert k(1.7) == 0.0
    assert float(k(0.0)) == pytest.approx(k.k0)


def test_triweight_values():
    k = get_kernel("triweight")
    assert float(k(0.0)) == 35.0 / 32.0 == 1.09375
    # independent quadrature oracle for int K^2
    ik2, err = quad(lambda u: float(k(u)) ** 2, -1, 1, limit=200)
    assert abs(ik2 - 0.815851) < 1e-6
    assert abs(ik2 - 350.0 / 429.0) < 1e-12
    assert abs(k.ik2 - ik2) < 1e-10


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_ik2_matches_quadrature(name):
    k = get_kernel(name)
    ik2, _ = quad(lambda u: float(k(u)) ** 2, -1, 1, limit=200)
    assert abs(k.ik2 - ik2) < 1e-10


def test_rk_printed_formula():
    k = get_kernel("triweight")
    # the printed denominator integrates to 1/2 for any density kernel
    assert k.r_k("printed") == pytest.approx(2 * 1.09375 - 350.0 / 429.0, abs=1e-12)
    assert k.r_k("printed") == pytest.approx(1.371649, abs=1e-6)


def test_rk_squared_variant_differs():
    k = get_kernel("triweight")
    rs = k.r_k("squared")
    assert rs > 0
    assert abs(rs - k.r_k("printed")) > 1e-3


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_derivative_matches_fd(name):
    k = get_kernel(name)
    for u in (-0.8, -0.3, 0.0, 0.4, 0.9):
        fd = (float(k(u + 1e-7)) - float(k(u - 1e-7))) / 2e-7
        assert float(k.deriv(u)) == pytest.approx(fd, abs=1e-6)


def test_symmetry():
    for name in KERNELS:
        k = get_kernel(name)
        u = np.linspace(0, 1, 11)
        assert np.allclose(k(u), k(-u))
