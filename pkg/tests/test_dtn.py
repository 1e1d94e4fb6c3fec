import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from minimax_helmholtz.dtn import (FourierTrace, dtn_adjoint_check, dtn_apply, dtn_symbol,
                                   exterior_extend, hankel_ratios)
from minimax_helmholtz.errors import DomainError


def mode(R, nf, m, value=1.0):
    c = np.zeros(2 * nf + 1, dtype=complex)
    c[m + nf] = value
    return FourierTrace(R, c)


@pytest.mark.parametrize("k", [2.0, 2.0 + 0.3j, 0.7 + 1.1j])
def test_symbol_against_hankel_derivative_ratio(k):
    R = 3.0
    n = np.arange(-12, 13)
    ref = k * special.h1vp(np.abs(n), k * R) / special.hankel1(np.abs(n), k * R)
    assert np.allclose(dtn_symbol(1, k, R, n), ref, rtol=1e-13)
    ref2 = np.conj(k) * special.h2vp(np.abs(n), np.conj(k) * R) / special.hankel2(np.abs(n), np.conj(k) * R)
    assert np.allclose(dtn_symbol(2, k, R, n), ref2, rtol=1e-13)


def test_single_mode_apply():
    k, R = 2.0 + 0.3j, 3.0
    out = dtn_apply(1, k, mode(R, 5, 3))
    expected = k * special.h1vp(3, k * R) / special.hankel1(3, k * R)
    assert out.coeffs[8] == pytest.approx(expected, rel=1e-13)
    assert np.count_nonzero(out.coeffs) == 1


def test_hankel_zero_trace_derivative():
    k, R = 1.5, 2.0
    tr = mode(R, 4, 0, special.hankel1(0, k * R))
    out = dtn_apply(1, k, tr)
    assert out.coeffs[4] == pytest.approx(-k * special.hankel1(1, k * R), rel=1e-12)


def test_zero_trace():
    tr = FourierTrace(2.0, np.zeros(9, complex))
    assert np.all(dtn_apply(1, 2.0, tr).coeffs == 0)


def test_high_orders_stay_finite():
    s = dtn_symbol(1, 2.0, 3.0, np.arange(0, 400))
    assert np.all(np.isfinite(s))
    # large-order behaviour -n/R
    assert s[-1].real == pytest.approx(-399 / 3.0, rel=1e-2)


def test_symbol_inversion():
    rng = np.random.default_rng(0)
    tr = FourierTrace(3.0, rng.normal(size=21) + 1j * rng.normal(size=21))
    back = dtn_apply(1, 2.0, tr).coeffs / dtn_symbol(1, 2.0, 3.0, tr.orders)
    assert np.allclose(back, tr.coeffs, rtol=1e-13)


def test_adjoint_check():
    assert dtn_adjoint_check(2 + 0.3j, 3.0, 16, rng=1, n_pairs=50) < 1e-10
    assert dtn_adjoint_check(2 + 0.3j, 3.0, 0, rng=2, n_pairs=5) < 1e-14


def test_adjoint_symbol_is_conjugate():
    k, R = 2 + 0.3j, 3.0
    n = np.arange(-20, 21)
    assert np.allclose(dtn_symbol(2, k, R, n), np.conj(dtn_symbol(1, k, R, n)), rtol=1e-13)


def test_exterior_extend():
    k, R = 2.0, 1.5
    m = 3
    tr = mode(R, 6, m, special.hankel1(m, k * R))
    th = 0.7
    for rp in (R, 2.0, 5.0):
        P = [[rp * np.cos(th), rp * np.sin(th)]]
        val = exterior_extend(k, tr, P)[0]
        assert val == pytest.approx(special.hankel1(m, k * rp) * np.exp(1j * m * th), rel=1e-12)
    rng = np.random.default_rng(3)
    tr2 = FourierTrace(R, rng.normal(size=13) + 1j * rng.normal(size=13))
    assert exterior_extend(k, tr2, [[R * np.cos(th), R * np.sin(th)]])[0] == pytest.approx(tr2(np.array([th]))[0], rel=1e-12)
    with pytest.raises(DomainError):
        exterior_extend(k, tr2, [[0.5, 0.0]])


def test_extension_sommerfeld_bound():
    rng = np.random.default_rng(4)
    tr = FourierTrace(1.0, rng.normal(size=9) + 1j * rng.normal(size=9))
    vals = [abs(exterior_extend(2.0, tr, [[r, 0.0]])[0]) * np.sqrt(r) for r in (10.0, 100.0, 1000.0)]
    assert max(vals) < 2 * min(vals)


def test_hankel_ratios_forward_recurrence():
    z = 2.3 + 0.4j
    q = hankel_ratios(1, z, 30)
    ref = special.hankel1(np.arange(1, 31), z) / special.hankel1(np.arange(0, 30), z)
    assert np.allclose(q[1:], ref, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10), st.integers(0, 2**31 - 1))
def test_real_trace_coefficients_conjugate(nf, seed):
    N = 2 * nf + 3
    v = np.random.default_rng(seed).normal(size=N)
    tr = FourierTrace.from_samples(1.0, v, nf)
    assert np.allclose(tr.coeffs[::-1], np.conj(tr.coeffs), atol=1e-14)
