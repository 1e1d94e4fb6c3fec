import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minimax_helmholtz.errors import DomainError
from minimax_helmholtz.specfun import bessel_jy, hankel, hankel_values, h0h1
from oracles import bessel_series


def test_j0_y0_at_one_against_series():
    J, Y = bessel_jy(0, 1.0)
    Jr, _, Yr, _ = bessel_series(0, 1.0)
    assert abs(J.value - Jr.real) < 1e-15
    assert abs(Y.value - Yr.real) < 1e-15
    assert J.value == pytest.approx(0.7651976866, abs=1e-10)
    assert Y.value == pytest.approx(0.0882569642, abs=1e-10)


def test_small_argument_limit():
    J, _ = bessel_jy(0, 1e-12)
    assert J.value == pytest.approx(1.0, abs=1e-15)
    assert abs(J.derivative) < 1e-11


def test_wronskian_example():
    J, Y = bessel_jy(1, 2.5)
    assert J.value * Y.derivative - J.derivative * Y.value == pytest.approx(2 / (np.pi * 2.5), rel=1e-13)


@pytest.mark.parametrize("n", [0, 1, 7, 20, 40])
@pytest.mark.parametrize("x", [0.05, 1.3, 9.7, 33.3, 50.0])
def test_values_match_series_oracle(n, x):
    J, Y = bessel_jy(n, x)
    Jr, Jpr, Yr, Ypr = bessel_series(n, x)
    for got, ref in ((J.value, Jr), (Y.value, Yr), (J.derivative, Jpr), (Y.derivative, Ypr)):
        assert abs(got - ref) <= 1e-12 * abs(ref)


def test_hankel_first_kind_at_one():
    H = hankel(1, 0, 1.0)
    assert H.value == pytest.approx(0.7651976866 + 0.0882569642j, abs=1e-10)


def test_hankel_recurrence_for_derivative():
    H2, H3 = hankel(1, 2, 2.0), hankel(1, 3, 2.0)
    assert abs(H2.value - 1.5 * H3.value - H3.derivative) < 1e-12 * abs(H3.value)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.floats(0.1, 50.0))
def test_wronskian_property(n, x):
    J, Y = bessel_jy(n, x)
    w = J.value * Y.derivative - J.derivative * Y.value
    assert abs(w - 2 / (np.pi * x)) < 1e-10 * 2 / (np.pi * x)


@settings(max_examples=40, deadline=None)
@given(st.integers(-40, 40), st.floats(0.01, 60.0))
def test_conjugation_and_reflection(n, x):
    h1, h2 = hankel(1, n, x), hankel(2, n, x)
    assert h2.value == np.conj(h1.value)
    assert h2.derivative == np.conj(h1.derivative)
    hp, hm = hankel(1, abs(n), x), hankel(1, -abs(n), x)
    assert hm.value == (-1) ** abs(n) * hp.value


def test_first_kind_equals_j_plus_iy():
    for n, x in [(0, 0.3), (5, 4.0), (12, 30.0)]:
        J, Y = bessel_jy(n, x)
        H = hankel(1, n, x)
        assert abs(H.value - (J.value + 1j * Y.value)) < 1e-14 * abs(H.value)


def test_domain_errors():
    with pytest.raises(DomainError):
        bessel_jy(0, 0.0)
    with pytest.raises(DomainError):
        bessel_jy(0, -1.0)
    with pytest.raises(DomainError):
        bessel_jy(61, 1.0)
    with pytest.raises(DomainError):
        hankel(1, 0, 0.0)
    with pytest.raises(DomainError):
        hankel(1, 0, 1.0 - 0.5j)


def test_h0h1_left_half_plane_uses_conjugate_symmetry():
    r = np.array([0.3, 1.7, 4.0])
    k = 2.0 + 0.2j
    H0, H1 = h0h1(k, r)
    H0m, H1m = h0h1(-np.conj(k), r)
    assert np.allclose(H0m, -np.conj(H0), rtol=1e-14)
    assert np.allclose(H1m, np.conj(H1), rtol=1e-14)
    h, _ = hankel_values(1, 0, k * r)
    assert np.allclose(H0, h, rtol=1e-15)
