"""Cylindrical Bessel and Hankel functions of integer order.

Values come from scipy.special (AMOS); this module fixes the argument
domain, the sign conventions for negative orders and the pairing of each
function with its derivative.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError

MAX_ORDER = 60


class CylPair(NamedTuple):
    value: complex
    derivative: complex


def _check_order(order: int) -> int:
    if int(order) != order:
        raise DomainError(f"order must be an integer, got {order!r}")
    order = int(order)
    if abs(order) > MAX_ORDER:
        raise DomainError(f"|order| = {abs(order)} exceeds table limit {MAX_ORDER}")
    return order


def bessel_jy(order: int, x: float) -> tuple[CylPair, CylPair]:
    """J_n(x), Y_n(x) and their derivatives for integer n >= 0 and real x > 0."""
    order = _check_order(order)
    if order < 0:
        raise DomainError("bessel_jy takes non-negative orders")
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"bessel_jy needs x > 0, got {x}")
    J = CylPair(float(special.jv(order, x)), float(special.jvp(order, x)))
    Y = CylPair(float(special.yv(order, x)), float(special.yvp(order, x)))
    return J, Y


def _check_z(kind: int, z) -> None:
    z = np.asarray(z)
    if np.any(z == 0):
        raise DomainError("Hankel functions are singular at z = 0")
    if kind == 1 and np.any(z.imag < 0):
        raise DomainError("kind 1 is evaluated only for Im z >= 0")
    if kind == 2 and np.any(z.imag > 0):
        raise DomainError("kind 2 is evaluated only for Im z <= 0")


def hankel_values(kind: int, order, z):
    """Vectorized H_n^(kind)(z) and H_n^(kind)'(z); broadcasting over order and z."""
    if kind not in (1, 2):
        raise DomainError(f"kind must be 1 or 2, got {kind}")
    _check_z(kind, z)
    n = np.asarray(order)
    if np.any(np.abs(n) > MAX_ORDER):
        raise DomainError(f"order beyond table limit {MAX_ORDER}")
    m = np.abs(n)
    sign = np.where(n < 0, (-1.0) ** m, 1.0)
    if kind == 1:
        h = special.hankel1(m, z)
        dh = special.h1vp(m, z)
    else:
        h = special.hankel2(m, z)
        dh = special.h2vp(m, z)
    return sign * h, sign * dh


def hankel(kind: int, order: int, z: complex) -> CylPair:
    """H_n^(1)(z) or H_n^(2)(z) with derivative; negative n by reflection."""
    order = _check_order(order)
    h, dh = hankel_values(kind, order, complex(z))
    return CylPair(complex(h), complex(dh))


def h0h1(k: complex, r):
    """H_0^(1)(k r) and H_1^(1)(k r) for Im k >= 0, using conjugation when Re k < 0.

    The fundamental solution satisfies Phi_{-conj k} = conj(Phi_k), so kernels for
    wavenumbers in the left half plane are obtained from the right half plane.
    """
    k = complex(k)
    r = np.asarray(r, dtype=float)
    if k.real >= 0:
        z = k * r
        return special.hankel1(0, z), special.hankel1(1, z)
    # H_0^(1)(k r) = -conj(H_0^(1)(-conj(k) r)),  H_1^(1)(k r) = conj(H_1^(1)(-conj(k) r))
    z = -np.conj(k) * r
    return -np.conj(special.hankel1(0, z)), np.conj(special.hankel1(1, z))
