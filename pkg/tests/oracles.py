"""Slow independent reference values for the test suite (multiprecision series and quadrature)."""
from __future__ import annotations

import mpmath as mp
import numpy as np


def bessel_series(n: int, x: float, dps: int = 90) -> tuple[complex, complex, complex, complex]:
    """(J_n, J_n', Y_n, Y_n') at real x > 0 by the ascending series, summed in high precision."""
    with mp.workdps(dps):
        x = mp.mpf(x)
        h = x / 2

        def jser(n):
            s, m = mp.mpf(0), 0
            term = h**n / mp.factorial(n)
            while True:
                s += term
                m += 1
                term *= -h * h / (m * (m + n))
                if abs(term) < mp.eps * abs(s) * mp.mpf(10) ** -5 and m > 5:
                    return s

        def yser(n):
            # Y_n = (2/pi) J_n ln(x/2) - (1/pi) sum_{m<n} (n-m-1)!/m! h^(2m-n)
            #       - (1/pi) sum_m (-1)^m (psi(m+1) + psi(m+n+1)) h^(2m+n) / (m! (m+n)!)
            s1 = mp.fsum(mp.factorial(n - m - 1) / mp.factorial(m) * h ** (2 * m - n) for m in range(n))
            s2, m = mp.mpf(0), 0
            term = h**n / mp.factorial(n)
            while True:
                add = term * (mp.digamma(m + 1) + mp.digamma(m + n + 1))
                s2 += add
                m += 1
                term *= -h * h / (m * (m + n))
                if abs(add) < mp.eps * max(abs(s2), mp.mpf(1)) * mp.mpf(10) ** -5 and m > 5:
                    break
            return 2 / mp.pi * jser(n) * mp.log(h) - (s1 + s2) / mp.pi

        def jn(n):
            return jser(n) if n >= 0 else (-1) ** n * jser(-n)

        def yn(n):
            return yser(n) if n >= 0 else (-1) ** n * yser(-n)

        J, Y = jn(n), yn(n)
        Jp = jn(n - 1) - n / x * J
        Yp = yn(n - 1) - n / x * Y
        return complex(J), complex(Jp), complex(Y), complex(Yp)


def arc_length(fun_speed, a: float, b: float) -> float:
    """Length from |x'(t)| by adaptive multiprecision quadrature."""
    with mp.workdps(30):
        return float(mp.quad(lambda t: fun_speed(float(t)), np.linspace(a, b, 9).tolist()))
