"""Circular Dirichlet-to-Neumann maps and the exterior Hankel extension."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .specfun import hankel_values


@dataclass(frozen=True)
class FourierTrace:
    """psi(R, theta) = sum_{|n| <= n_f} c_n exp(i n theta); coeffs ordered n = -n_f..n_f."""

    R: float
    coeffs: np.ndarray

    @property
    def n_f(self) -> int:
        return (len(self.coeffs) - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.n_f, self.n_f + 1)

    @classmethod
    def from_samples(cls, R: float, values, n_f: int | None = None) -> "FourierTrace":
        """Coefficients from samples at theta_j = 2 pi j / N (requires N >= 2 n_f + 1)."""
        values = np.asarray(values, dtype=complex)
        N = len(values)
        n_f = (N - 1) // 2 if n_f is None else n_f
        if N < 2 * n_f + 1:
            raise ValueError(f"{N} samples cannot resolve n_f = {n_f}")
        c = np.fft.fft(values) / N
        n = np.arange(-n_f, n_f + 1)
        return cls(float(R), c[n % N])

    def samples(self, N: int) -> np.ndarray:
        theta = 2 * np.pi * np.arange(N) / N
        return self(theta)

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.exp(1j * np.multiply.outer(theta, self.orders)) @ self.coeffs


def hankel_ratios(kind: int, z, n_max: int) -> np.ndarray:
    """q_n = H_n(z)/H_{n-1}(z) for n = 1..n_max by the (stable) forward recurrence.

    Returns an array of shape (n_max + 1,) + shape(z) whose entry 0 is H_0(z).
    """
    z = np.asarray(z, dtype=complex)
    h0, _ = hankel_values(kind, 0, z)
    h1, _ = hankel_values(kind, 1, z)
    out = np.empty((n_max + 1,) + z.shape, dtype=complex)
    out[0] = h0
    if n_max >= 1:
        out[1] = h1 / h0
    for n in range(1, n_max):
        out[n + 1] = 2 * n / z - 1 / out[n]
    return out


def dtn_symbol(variant: int, k, R: float, orders) -> np.ndarray:
    """k H_n^(1)'(kR)/H_n^(1)(kR) (variant 1) or conj(k) H_n^(2)'(conj(k)R)/H_n^(2)(conj(k)R) (variant 2).

    Evaluated as k (H_{n-1}/H_n - n/(kR)) with ratios from the forward
    recurrence, so arbitrarily high orders stay finite; the symbol is even in n.
    """
    k = complex(k)
    if k == 0:
        raise DomainError("k = 0 is excluded")
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")
    kk = k if variant == 1 else np.conj(k)
    z = kk * R
    m = np.abs(np.asarray(orders, dtype=int))
    q = hankel_ratios(variant, z, max(int(m.max(initial=0)), 1))
    sym = np.empty(m.shape, dtype=complex)
    zero = m == 0
    # H_0' = -H_1
    sym[zero] = -kk * q[1]
    mm = m[~zero]
    sym[~zero] = kk * (1 / q[mm] - mm / z)
    return sym


def dtn_apply(variant: int, k, trace: FourierTrace) -> FourierTrace:
    return FourierTrace(trace.R, dtn_symbol(variant, k, trace.R, trace.orders) * trace.coeffs)


def dtn_matrix(variant: int, k, R: float, n_theta: int) -> np.ndarray:
    """Dense circulant acting on n_theta nodal samples, all resolvable modes included."""
    n = np.fft.fftfreq(n_theta, 1.0 / n_theta).astype(int)
    sym = dtn_symbol(variant, k, R, n)
    F = np.fft.fft(np.eye(n_theta), axis=0)
    return np.fft.ifft(sym[:, None] * F, axis=0)


def pairing(R: float, u, v) -> complex:
    """Trapezoid approximation of int_{Gamma_R} u conj(v) ds from nodal samples."""
    u, v = np.asarray(u), np.asarray(v)
    return complex(2 * np.pi * R / len(u) * np.sum(u * np.conj(v)))


def dtn_adjoint_check(k, R: float, n_f: int, rng=None, n_pairs: int = 1) -> float:
    """max over random trace pairs of |<M1 phi, psi> - <phi, M2 psi>| / (|phi| |psi|).

    Both sides are computed from nodal samples on 2 n_f + 2 points.
    """
    rng = np.random.default_rng(rng)
    N = 2 * n_f + 2
    M1 = dtn_matrix(1, k, R, N)
    M2 = dtn_matrix(2, k, R, N)
    worst = 0.0
    for _ in range(n_pairs):
        phi = rng.normal(size=N) + 1j * rng.normal(size=N)
        psi = rng.normal(size=N) + 1j * rng.normal(size=N)
        lhs = pairing(R, M1 @ phi, psi)
        rhs = pairing(R, phi, M2 @ psi)
        norm = np.sqrt(abs(pairing(R, phi, phi)) * abs(pairing(R, psi, psi)))
        sym = np.abs(dtn_symbol(1, k, R, np.arange(n_f + 2))).max()
        worst = max(worst, abs(lhs - rhs) / (norm * sym))
    return worst


def exterior_extend(k, trace: FourierTrace, points) -> np.ndarray:
    """sum c_n H_n^(1)(k r)/H_n^(1)(k R) exp(i n theta) at points with r >= R."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(P[:, 0], P[:, 1])
    if np.any(r < trace.R * (1 - 1e-12)):
        raise DomainError("exterior_extend needs r >= R")
    th = np.arctan2(P[:, 1], P[:, 0])
    k = complex(k)
    nf = max(trace.n_f, 1)
    qr = hankel_ratios(1, k * r, nf)
    qR = hankel_ratios(1, k * trace.R, nf)
    ratio = np.empty((nf + 1, len(r)), dtype=complex)
    ratio[0] = qr[0] / qR[0]
    for n in range(1, nf + 1):
        ratio[n] = ratio[n - 1] * qr[n] / qR[n]
    n = trace.orders
    return (ratio[np.abs(n)].T * np.exp(1j * np.outer(th, n))) @ trace.coeffs
