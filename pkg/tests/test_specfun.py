import math

import mpmath as mp
import numpy as np
import pytest
from oracles import phi_quad, psi_quad, tail_moment_quad

from bspw.specfun import (
    block_norm_constant,
    chi_mean,
    chi_tail_mean,
    chi_tail_second_moment,
    gammaincc_reg,
    phi_B,
    psi,
    tail_moment,
    upper_incomplete_gamma,
)


def test_upper_gamma_trivial():
    assert upper_incomplete_gamma(1, 0) == pytest.approx(1.0, rel=1e-14)
    assert upper_incomplete_gamma(1, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-13)
    assert upper_incomplete_gamma(3.5, 0.0) == pytest.approx(math.gamma(3.5), rel=1e-13)


def test_upper_gamma_quadrature_value():
    # int_1.3^51.3 u^1.5 e^-u du, adaptive quadrature
    assert upper_incomplete_gamma(2.5, 1.3) == pytest.approx(1.0121136007032034, rel=1e-12)


def test_upper_gamma_against_mpmath(rng):
    a = rng.uniform(0.5, 40, 300)
    x = rng.uniform(0, 80, 300)
    got = gammaincc_reg(a, x)
    for ai, xi, g in zip(a, x, got):
        ref = float(mp.gammainc(ai, xi, regularized=True))
        if ref > 1e-250:
            assert g == pytest.approx(ref, rel=1e-12, abs=0)


def test_upper_gamma_errors():
    with pytest.raises(ValueError):
        upper_incomplete_gamma(0.0, 1.0)
    with pytest.raises(ValueError):
        gammaincc_reg(1.0, -0.5)


def test_tail_moment_examples():
    assert tail_moment(1, 0.0) == pytest.approx(1.0, rel=1e-14)
    assert tail_moment(0, 0.0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-14)
    assert tail_moment(3, 0.7) == pytest.approx(1.948934300222252, rel=1e-12)
    with pytest.raises(ValueError):
        tail_moment(-1, 0.5)


def test_psi_examples():
    assert psi(0.0, 1) == pytest.approx(1.0, rel=1e-14)
    assert chi_tail_mean(0.0, 1) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    for k in range(1, 15):
        assert psi(0.0, k) / block_norm_constant(k) == pytest.approx(chi_mean(k), rel=1e-13)
        assert psi(0.0, k) == pytest.approx(psi_quad(0.0, k), rel=1e-10)
    assert psi(10.0, 5) < 1e-15


def test_phi_examples():
    for k in range(1, 21):
        assert phi_B(0.0, k) / block_norm_constant(k) == pytest.approx(k, rel=1e-12)
    assert phi_B(0.0, 2) == pytest.approx(2.0, rel=1e-13)
    assert phi_B(25.0, 3) < 1e-15


def test_closed_form_matches_quadrature(rng):
    for _ in range(200):
        z = rng.uniform(0, 8)
        k = int(rng.integers(1, 26))
        for closed, ref in (
            (tail_moment(k, z), tail_moment_quad(k, z)),
            (psi(z, k), psi_quad(z, k)),
            (phi_B(z, k), phi_quad(z, k)),
        ):
            assert abs(closed - ref) <= 1e-9 * max(1.0, closed)


@pytest.mark.parametrize("k", [2, 3, 5, 8, 13, 21])
@pytest.mark.parametrize("z", [0.0, 0.3, 1.0, 2.5, 4.0, 7.0])
def test_recurrence(k, z):
    lhs = tail_moment(k, z)
    rhs = z ** (k - 1) * math.exp(-z * z / 2) + (k - 1) * tail_moment(k - 2, z)
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("k", [1, 2, 5, 10, 25])
def test_monotone_decreasing(k):
    z = np.linspace(0, 8, 400)
    assert np.all(np.diff(psi(z, k)) < 0)
    assert np.all(np.diff(phi_B(z, k)) < 0)


@pytest.mark.parametrize("k", [1, 2, 4, 7, 12])
@pytest.mark.parametrize("z", [0.2, 0.9, 1.7, 3.1])
def test_psi_derivative(k, z):
    h = 1e-6
    fd = (psi(z + h, k) - psi(z - h, k)) / (2 * h)
    ref = -tail_moment(k - 1, z)
    assert abs(fd - ref) <= 1e-6 * max(1.0, abs(ref))


def test_second_moment_derivative():
    # d/dz E[(chi_k - z)_+^2] = -2 E[(chi_k - z)_+]
    for k in (1, 3, 9):
        for z in (0.4, 1.5, 2.8):
            h = 1e-6
            fd = (chi_tail_second_moment(z + h, k) - chi_tail_second_moment(z - h, k)) / (2 * h)
            assert fd == pytest.approx(-2 * chi_tail_mean(z, k), abs=1e-6)


def test_array_inputs_broadcast():
    z = np.array([0.0, 1.0, 2.0])
    out = chi_tail_second_moment(z, np.array([1, 2, 3]))
    assert out.shape == (3,)
    assert out[0] == pytest.approx(1.0)
    assert isinstance(chi_tail_mean(1.0, 3), float)


def test_large_k_stays_finite():
    assert math.isfinite(chi_tail_second_moment(0.0, 200))
    assert chi_tail_second_moment(0.0, 200) == pytest.approx(200, rel=1e-10)
