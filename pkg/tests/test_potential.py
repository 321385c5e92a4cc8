import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from heightspin.potential import (
    PotentialError,
    bernstein_check,
    bessel,
    bessel_addition_check,
    bessel_I,
    characteristic,
    characteristic_positivity,
    convexity_check,
    divisibility_factor,
    gaussian,
    log_bessel_ratio,
    parse_potential,
    power,
    tabulated,
    villain_log_weight,
)


def test_formulas():
    assert gaussian(1.0)(2) == pytest.approx(2.0)
    assert bessel(1.7)(0) == 0.0
    assert power(0.5, 1.5)(4) == pytest.approx(4.0)


def test_tabulated_tail():
    U = tabulated([0.0, 1.0, 3.0], tail_slope=2.0)
    assert U(1) == 1.0 and U(2) == 3.0 and U(5) == pytest.approx(9.0)
    with pytest.raises(PotentialError):
        tabulated([1.0, 2.0], 0.0)


def test_parse_round_trip():
    assert parse_potential("power:l=1,a=1.5") == power(1.0, 1.5)
    assert parse_potential("bessel:b=2") == bessel(2.0)
    for bad in ("gauss:l=1", "gaussian:b=1", "gaussian:l=x", "power:l=1"):
        with pytest.raises(PotentialError):
            parse_potential(bad)


def test_bessel_potential_only_on_integers():
    with pytest.raises(PotentialError):
        bessel(1.0)(0.5)


@pytest.mark.parametrize("beta", [1e-6, 0.3, 1.0, 2.5, 10.0, 60.0])
@pytest.mark.parametrize("m", [0, 1, 2, 7, 30])
def test_bessel_against_scipy(m, beta):
    # scipy's exponentially scaled iv keeps large arguments finite
    ref = math.log(scipy.special.ive(m, beta)) + beta
    got = math.log(bessel_I(m, beta))
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_bessel_small_argument_limit():
    assert bessel_I(0, 1e-12) == pytest.approx(1.0, abs=1e-15)


@given(m=st.integers(-40, 40), beta=st.floats(0.01, 50.0))
@settings(max_examples=60, deadline=None)
def test_bessel_even_in_order(m, beta):
    assert bessel_I(-m, beta) == bessel_I(m, beta)


def test_log_bessel_ratio_vectorised():
    beta = 3.0
    ms = np.arange(-5, 6)
    ref = np.log(scipy.special.ive(ms, beta) / scipy.special.ive(0, beta))
    np.testing.assert_allclose(log_bessel_ratio(ms, beta), ref, rtol=1e-12, atol=1e-13)


def test_bessel_addition_identity():
    rep = bessel_addition_check(2, 0, 1.0, 1.5)
    assert rep.passed and rep.lhs < 1e-10
    direct = math.fsum(scipy.special.iv(2 - l, 1.0) * scipy.special.iv(l, 1.5) for l in range(-64, 65))
    assert direct == pytest.approx(scipy.special.iv(2, 2.5), rel=1e-12)
    assert rep.details["exact"] == pytest.approx(scipy.special.iv(2, 2.5), rel=1e-12)


@given(b1=st.floats(0.1, 8.0), b2=st.floats(0.1, 8.0))
@settings(max_examples=25, deadline=None)
def test_bessel_weights_convolve(b1, b2):
    # exp(-U) for bessel(b1 + b2) is the discrete convolution of the two weights
    q = np.arange(-8, 9)
    l = np.arange(-80, 81)
    w1, w2 = bessel(b1).weight(l), bessel(b2).weight
    conv = np.array([np.sum(w1 * w2(qq - l)) for qq in q])
    target = bessel(b1 + b2).weight(q)
    np.testing.assert_allclose(conv / conv[8], target, rtol=1e-9)


def test_divisibility_gaussian_continuous():
    lam, r = 0.8, 2
    f = divisibility_factor(gaussian(lam), r)
    assert f == gaussian(2 * lam)

    def conv(q):
        return scipy.integrate.quad(lambda x: float(f.weight(x) * f.weight(q - x)), -np.inf, np.inf, epsabs=0, epsrel=1e-13)[0]

    c0 = conv(0.0)
    for q in range(-8, 9):
        assert conv(float(q)) / c0 == pytest.approx(float(gaussian(lam).weight(q)), rel=1e-9)


def test_divisibility_bessel_discrete():
    f = divisibility_factor(bessel(2.0), 2)
    assert f == bessel(1.0)
    q = np.arange(-8, 9)
    l = np.arange(-60, 61)
    conv = np.array([np.sum(f.weight(l) * f.weight(qq - l)) for qq in q])
    np.testing.assert_allclose(conv / conv[8], bessel(2.0).weight(q), rtol=1e-9)


def test_divisibility_edges():
    assert divisibility_factor(power(1.0, 1.5), 1) == power(1.0, 1.5)
    with pytest.raises(PotentialError):
        divisibility_factor(power(1.0, 1.5), 2)
    with pytest.raises(PotentialError):
        divisibility_factor(gaussian(1.0), 0)


@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_bernstein_passes_below_two(alpha):
    rep = bernstein_check(power(1.0, alpha))
    assert rep.passed and not rep.offending


def test_bernstein_fails_for_alpha_three():
    rep = bernstein_check(power(1.0, 3.0))
    assert not rep.passed
    assert any(k <= 4 for k, _ in rep.offending)


def test_bernstein_gaussian_closed_form():
    lam = 1.3
    t = np.array([0.1, 1.0, 5.0])
    rep = bernstein_check(gaussian(lam), k_max=4, t_grid=t)
    assert rep.passed
    for k, m in enumerate(rep.min_signed, start=1):
        # (-1)^k F^(k) = (lam/2)^k exp(-lam t/2), smallest at the largest t
        assert m == pytest.approx((lam / 2) ** k * math.exp(-lam * t[-1] / 2), rel=1e-6)


def test_convexity():
    assert convexity_check(gaussian(0.3))
    assert convexity_check(bessel(1.0), window=32)
    assert not convexity_check(power(1.0, 0.5))


@pytest.mark.parametrize("U", [gaussian(0.5), gaussian(2.0), bessel(1.0), bessel(2.0), power(1.0, 1.0), power(1.0, 1.5)], ids=lambda U: U.label())
def test_characteristic_positive(U):
    rep = characteristic_positivity(U)
    assert rep.passed


def test_characteristic_is_fourier_sum():
    U = power(0.7, 1.2)
    phi = np.linspace(-3, 3, 7)
    m = np.arange(-64, 65)
    ref = np.real(np.exp(-1j * np.outer(phi, m)) @ U.weight(m))
    np.testing.assert_allclose(characteristic(U, phi, 64), ref, rtol=1e-12)


def test_villain_weight_matches_direct_sum():
    phi = np.linspace(-np.pi, np.pi, 9)
    beta = 0.4
    m = np.arange(-30, 31)
    ref = np.log(np.exp(-beta * (phi[:, None] + 2 * np.pi * m) ** 2 / 2).sum(axis=1))
    np.testing.assert_allclose(villain_log_weight(phi, beta), ref, rtol=1e-13)
