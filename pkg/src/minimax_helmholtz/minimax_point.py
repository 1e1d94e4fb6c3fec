"""Minimax estimation of l(phi) = sum conj(a_i) phi(x_i) from point values y_k = phi(x'_k) + eta_k.

The state is the outgoing exterior Neumann solution with data h in
int_Gamma q1^2 |h - h0|^2 <= 1 (nu out of the obstacle); the noise satisfies
sum r_k^2 E|eta_k|^2 <= 1.  For weights u the adjoint field is

    z(.; u) = -sum a_i Phi_{-conj k}(., x_i) + sum u_k Phi_{-conj k}(., x'_k) + scattered,

with dz/dnu = 0 on Gamma, and I(u) = int q1^-2 |z|^2 + sum r_k^-2 |u_k|^2.
The optimal weights are u_k = r_k^2 p(x'_k) where p is the outgoing field
with Neumann data q1^-2 z; sigma^2 = sum conj(a_i) p(x_i).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DomainError, NegativeSigmaSquared, SeparationViolation
from .forward import (ExteriorSolution, _check_eta, _solve_dense, cfie_matrix, cfie_rhs_operator,
                      solve_exterior_neumann, solve_exterior_neumann_adjoint)
from .geometry import ClosedCurveGrid, curve_grid, winding_number
from .potentials import _check_k, assemble_boundary_ops, curve_distance, default_threshold, kernel_matrices, layer_matrix


def _nodal(v, points, n) -> np.ndarray:
    if v is None:
        return np.zeros(n, dtype=complex)
    if callable(v):
        out = np.asarray(v(points), dtype=complex)
    else:
        out = np.asarray(v, dtype=complex)
        if out.ndim == 0:
            return np.full(n, complex(out))
    if out.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {out.shape}")
    return out


def _check_points(grid: ClosedCurveGrid, P: np.ndarray, what: str) -> None:
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError(f"{what} must have shape (n, 2)")
    if np.any(winding_number(grid.curve, P) != 0):
        raise DomainError(f"{what} must lie outside the obstacle")
    thr = default_threshold(grid)
    d = curve_distance(grid, P)
    if np.any(d < thr):
        raise SeparationViolation(f"{what} at distance {d.min():.3g} from Gamma, below {thr:.3g}")


@dataclass(frozen=True)
class PointFunctional:
    """l(phi) = sum conj(a_i) phi(x_i)."""

    points: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=complex)))
        if len(self.a) != len(self.points):
            raise ValueError("one coefficient per functional point is required")

    def __call__(self, values) -> complex:
        return complex(np.sum(np.conj(self.a) * np.asarray(values)))


@dataclass(frozen=True, eq=False)
class PointObservationSetup:
    grid: ClosedCurveGrid
    k: complex
    points: np.ndarray
    r: np.ndarray
    q1: object = 1.0
    h0: object = None
    eta: float = 1.0

    def __post_init__(self):
        k = _check_k(self.k)
        _check_eta(k, self.eta)
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", P)
        r = np.broadcast_to(np.asarray(self.r, dtype=float), (len(P),)).copy()
        if np.any(r <= 0):
            raise ValueError("noise weights r_k must be positive")
        object.__setattr__(self, "r", r)
        _check_points(self.grid, P, "observation points")
        if len(P) > 1 and pdist(P).min() == 0:
            raise ValueError("observation points must be pairwise distinct")

    @cached_property
    def asm(self) -> "_PointAssembly":
        return _PointAssembly(self)

    def replace(self, **kw) -> "PointObservationSetup":
        f = dict(grid=self.grid, k=self.k, points=self.points, r=self.r, q1=self.q1, h0=self.h0, eta=self.eta)
        f.update(kw)
        return PointObservationSetup(**f)


class _PointAssembly:
    def __init__(self, s: PointObservationSetup):
        g = s.grid
        k = complex(s.k)
        self.k, self.kb = k, -np.conj(k)
        self.N = g.n
        self.ops = assemble_boundary_ops(g, k)
        self.ops_adj = self.ops.conjugate_wavenumber()
        self.A = cfie_matrix(self.ops, s.eta)
        self.B = cfie_rhs_operator(self.ops, s.eta)
        self.A_adj = cfie_matrix(self.ops_adj, s.eta, adjoint=True)
        self.B_adj = cfie_rhs_operator(self.ops_adj, s.eta, adjoint=True)
        self.q1m2 = 1 / np.abs(_nodal(s.q1, g.x, g.n)) ** 2
        self.h0 = _nodal(s.h0, g.x, g.n)
        self.wG = g.weights
        self.r2 = s.r**2
        self.grid = g
        # Gamma -> observation points at k
        self.Wobs = layer_matrix(g, "double", k, s.points)
        self.Vobs = layer_matrix(g, "single", k, s.points)
        # observation point sources at -conj k, on Gamma
        src = self.sources(s.points)
        self.Pobs, self.Pobs_dn = src

    def sources(self, pts):
        """Phi_{-conj k}(y, x) and its d/dnu_y for y on Gamma, one column per point x."""
        m = kernel_matrices(self.kb, self.grid.x, pts, self.grid.normal, None, which=("phi", "dnx"))
        return m["phi"], m["dnx"]

    def alpha(self) -> np.ndarray:
        """alpha[s, l] = r_l^2 [V_k q1^-2 Phi_{-conj k}(., x'_l)](x'_s)."""
        return self.Vobs @ (self.q1m2[:, None] * self.Pobs) * self.r2[None, :]


@dataclass(frozen=True, eq=False)
class PointSolution:
    psi: np.ndarray
    chi: np.ndarray
    p_at_obs: np.ndarray
    u_hat: np.ndarray
    z_gamma: np.ndarray
    p_neumann: np.ndarray
    c_hat: complex
    sigma2: complex
    cond: float
    grid: ClosedCurveGrid
    k: complex

    @property
    def sigma(self) -> float:
        s2 = self.sigma2
        if s2.real < -1e-10 * max(1.0, abs(s2)):
            raise NegativeSigmaSquared(f"sigma^2 = {s2}")
        return float(np.sqrt(max(s2.real, 0.0)))

    def p(self, points) -> np.ndarray:
        """p = W chi - V (q1^-2 z) at exterior points."""
        return ExteriorSolution(self.grid, self.k, self.k, self.chi, self.p_neumann, 0.0, self.cond).evaluate(points)


def _system(A: _PointAssembly) -> np.ndarray:
    """Dense matrix over (psi, chi, P = p(x'))."""
    N, n = A.N, len(A.r2)
    Q = A.q1m2
    S = np.zeros((2 * N + n, 2 * N + n), dtype=complex)
    S[:N, :N] = A.A_adj
    # g_s = -dZ_in/dnu; Z_in contains + sum r_l^2 P_l Phi(., x'_l)
    S[:N, 2 * N:] = A.B_adj @ (A.Pobs_dn * A.r2[None, :])
    S[N:2 * N, :N] = -A.B * Q[None, :]
    S[N:2 * N, N:2 * N] = A.A
    S[N:2 * N, 2 * N:] = -(A.B * Q[None, :]) @ (A.Pobs * A.r2[None, :])
    S[2 * N:, :N] = A.Vobs * Q[None, :]
    S[2 * N:, N:2 * N] = -A.Wobs
    S[2 * N:, 2 * N:] = np.eye(n) + A.alpha()
    return S


def _rhs(A: _PointAssembly, zG0, zN0, hx) -> np.ndarray:
    hfix = A.q1m2 * zG0 + hx
    return np.concatenate([-A.B_adj @ zN0, A.B @ hfix, -A.Vobs @ hfix])


def solve_point_system(setup: PointObservationSetup, functional: PointFunctional) -> PointSolution:
    A = setup.asm
    _check_points(setup.grid, functional.points, "functional points")
    Pa, Pa_dn = A.sources(functional.points)
    zG0, zN0 = -Pa @ functional.a, -Pa_dn @ functional.a
    S = _system(A)
    x, cond = _solve_dense(S, _rhs(A, zG0, zN0, np.zeros(A.N, complex)))
    N = A.N
    psi, chi, P = x[:N], x[N:2 * N], x[2 * N:]
    z_gamma = psi + zG0 + A.Pobs @ (A.r2 * P)
    hp = A.q1m2 * z_gamma
    sol = PointSolution(psi, chi, P, A.r2 * P, z_gamma, hp, complex(np.sum(A.wG * A.h0 * np.conj(z_gamma))),
                        0j, cond, setup.grid, complex(setup.k))
    s2 = functional(sol.p(functional.points))
    return PointSolution(psi, chi, P, A.r2 * P, z_gamma, hp, sol.c_hat, s2, cond, setup.grid, complex(setup.k))


def point_estimate(sol: PointSolution, y) -> complex:
    """sum conj(u_k) y_k + c_hat."""
    y = np.asarray(y)
    if y.shape != sol.u_hat.shape:
        raise ValueError(f"expected {sol.u_hat.shape[0]} observations, got {y.shape}")
    return complex(np.sum(np.conj(sol.u_hat) * y) + sol.c_hat)


def adjoint_boundary_trace(setup: PointObservationSetup, functional: PointFunctional, u) -> np.ndarray:
    """z(.; u)|Gamma from point sources and the adjoint CFIE."""
    A = setup.asm
    u = np.asarray(u, dtype=complex)
    Pa, Pa_dn = A.sources(functional.points)
    zG = -Pa @ functional.a + A.Pobs @ u
    zn = -Pa_dn @ functional.a + A.Pobs_dn @ u
    scat = solve_exterior_neumann_adjoint(setup.grid, setup.k, -zn, setup.eta, ops=A.ops_adj)
    return scat.trace + zG


def worst_case_cost_point(setup: PointObservationSetup, functional: PointFunctional, u) -> float:
    """I(u) = int_Gamma q1^-2 |z(.; u)|^2 + sum r_k^-2 |u_k|^2."""
    A = setup.asm
    z = adjoint_boundary_trace(setup, functional, u)
    return float(np.sum(A.wG * A.q1m2 * np.abs(z) ** 2) + np.sum(np.abs(u) ** 2 / A.r2))


@dataclass(frozen=True, eq=False)
class PointStochastic:
    field: ExteriorSolution
    at_obs: np.ndarray

    def __call__(self, points) -> np.ndarray:
        return self.field.evaluate(points)


def solve_point_stochastic(setup: PointObservationSetup, y) -> PointStochastic:
    """phi_hat with l(phi_hat) equal to the minimax estimate for every point functional.

    The adjoint part is driven by v_k = r_k^2 (phi_hat(x'_k) - y_k); phi_hat has
    Neumann data q1^-2 p_hat + h0.
    """
    A = setup.asm
    y = np.asarray(y, dtype=complex)
    if y.shape != (len(A.r2),):
        raise ValueError(f"expected {len(A.r2)} observations, got shape {y.shape}")
    zG0 = -A.Pobs @ (A.r2 * y)
    zN0 = -A.Pobs_dn @ (A.r2 * y)
    x, cond = _solve_dense(_system(A), _rhs(A, zG0, zN0, A.h0))
    N = A.N
    psi, chi, F = x[:N], x[N:2 * N], x[2 * N:]
    p_gamma = psi + zG0 + A.Pobs @ (A.r2 * F)
    h_hat = A.q1m2 * p_gamma + A.h0
    return PointStochastic(ExteriorSolution(setup.grid, complex(setup.k), complex(setup.k), chi, h_hat,
                                            setup.eta, cond), F)


def alpha_beta(setup: PointObservationSetup, functional: PointFunctional, variant: str = "composed",
               dim: int = 2, sphere_radius: float | None = None, sphere_order: int = 32):
    """Coefficients alpha (N x N) and beta (N) of the point-value rows.

    variant 'composed': alpha[s, l] = r_l^2 [V_k q1^-2 Phi_{-conj k}(., x'_l)](x'_s) and
    beta[s] = [V_k q1^-2 sum a_j Phi_{-conj k}(., x_j)](x'_s), the blocks used by
    solve_point_system.  variant 'integral': the integrals (1/2pi) r_l^2 int_Gamma
    E_k(x'_s, y) q1^-2(y) E*(y, x'_l) with E = exp(ikr)/r in 3D (spherical Gamma of
    radius `sphere_radius` about the origin, product Gauss rule, q1 evaluated at 3D nodes) or
    E = H_0^(1)(k r), E* = H_0^(2)(conj(k) r) in 2D on the Gamma grid.
    In 2D the composed values are pi/8 times the integral values; in 3D 1/(8 pi).
    """
    k = complex(setup.k)
    r2 = setup.r**2
    if dim == 3:
        if sphere_radius is None:
            raise ValueError("3D coefficients need sphere_radius")
        Y, w = sphere_rule(sphere_radius, sphere_order)
        q1m2 = 1 / np.abs(_nodal(setup.q1, Y, len(w))) ** 2
        X, Xa = _as3(setup.points), _as3(functional.points)

        def E(T, S, kk):
            d = np.linalg.norm(T[:, None, :] - S[None, :, :], axis=-1)
            return np.exp(1j * kk * d) / d

        left = E(X, Y, k) * (w * q1m2)[None, :]
        if variant == "integral":
            alpha = left @ E(Y, X, -np.conj(k)) * r2[None, :] / (2 * np.pi)
            beta = left @ (E(Y, Xa, -np.conj(k)) @ functional.a) / (2 * np.pi)
        elif variant == "composed":
            c = 1 / (16 * np.pi**2)
            alpha = c * left @ E(Y, X, -np.conj(k)) * r2[None, :]
            beta = c * left @ (E(Y, Xa, -np.conj(k)) @ functional.a)
        else:
            raise ValueError(f"unknown variant {variant!r}")
        return alpha, beta
    A = setup.asm
    if variant == "composed":
        Pa, _ = A.sources(functional.points)
        return A.alpha(), A.Vobs @ (A.q1m2 * (Pa @ functional.a))
    if variant != "integral":
        raise ValueError(f"unknown variant {variant!r}")
    from scipy import special
    g = setup.grid
    M = max(4 * g.n, 512)
    fine = curve_grid(g.curve, M)
    q1m2 = 1 / np.abs(_nodal(setup.q1, fine.x, M)) ** 2

    def dist(T, S):
        return np.linalg.norm(T[:, None, :] - S[None, :, :], axis=-1)

    left = special.hankel1(0, k * dist(setup.points, fine.x)) * (fine.weights * q1m2)[None, :]
    alpha = left @ special.hankel2(0, np.conj(k) * dist(fine.x, setup.points)) * r2[None, :] / (2 * np.pi)
    beta = left @ (special.hankel2(0, np.conj(k) * dist(fine.x, functional.points)) @ functional.a) / (2 * np.pi)
    return alpha, beta


def _as3(P) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[1] == 3:
        return P
    return np.hstack([P, np.zeros((len(P), 1))])


def sphere_rule(radius: float, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss-Legendre (polar) x trapezoid (azimuth) rule on a sphere."""
    x, w = np.polynomial.legendre.leggauss(order)
    nphi = 2 * order
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1 - x**2)
    P = radius * np.stack([np.outer(st, np.cos(phi)).ravel(), np.outer(st, np.sin(phi)).ravel(),
                           np.repeat(x, nphi)], 1)
    W = radius**2 * np.outer(w, np.full(nphi, 2 * np.pi / nphi)).ravel()
    return P, W


def forward_point_values(setup: PointObservationSetup, h, points=None):
    """Forward solve for Neumann data h; values at the observation points (and optionally extra points)."""
    A = setup.asm
    h = np.asarray(h, dtype=complex)
    sol = solve_exterior_neumann(setup.grid, setup.k, h, setup.eta, ops=A.ops, check_cond=False)
    at_obs = A.Wobs @ sol.trace - A.Vobs @ h
    if points is None:
        return at_obs
    return at_obs, sol.evaluate(points)
