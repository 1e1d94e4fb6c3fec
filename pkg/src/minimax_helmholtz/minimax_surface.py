"""Minimax estimation from observations of phi and dphi/dnu on open arcs (2D).

The state is the outgoing solution of (Lap + k^2) phi = 0 outside the obstacle
with dphi/dnu = h on Gamma, nu pointing out of the obstacle, and h in the
ellipsoid int_Gamma q1^2 |h - h0|^2 <= 1.  On each arc gamma_i

    y^(r)(x) = int K^(r,1)(x, y) phi(y) + K^(r,2)(x, y) dphi/dnu(y) dy + eta^(r)(x),

with noise bounded by sum int (r^(r))^2 E|eta^(r)|^2 <= 1.  The functional is
l(phi) = int_{omega0} conj(l0) phi.

The adjoint field z (wavenumber conj k, incoming) solves
-(Lap + conj(k)^2) z = -chi l0, dz/dnu = 0 on Gamma, and jumps across each
arc by [z] = rho1 and [dz/dnu] = -rho2 (jump = side nu points to minus the
other side), so that z = -N l0 + sum (W rho1 - V rho2) + scattered part.
For a forward solution with data h,

    l(phi) - sum_j <phi_j, w_j> = int_Gamma h conj(z),

where w_j = sum_r (K^(r,j))^* (u^(r)), rho1 = w_2 and rho2 = -w_1.
The arc densities are sampled at Gauss-Legendre nodes and the arc and region
integrals act as weighted point sources, so the identity above is exact up to
the Nystrom error on Gamma.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import NegativeSigmaSquared
from .forward import (ExteriorSolution, _check_eta, _solve_dense, cfie_matrix, cfie_rhs_operator,
                      solve_exterior_neumann, solve_exterior_neumann_adjoint)
from .geometry import ClosedCurveGrid, OpenArcGrid, RegionSpec, min_separation
from .potentials import _check_k, assemble_boundary_ops, kernel_matrices, layer_matrix

PAIRS = ((1, 1), (1, 2), (2, 1), (2, 2))


def endpoint_taper(s) -> np.ndarray:
    """sqrt(1 - s^2) on the arc parameter s in [-1, 1]; vanishes at both endpoints."""
    s = np.asarray(s, dtype=float)
    return np.sqrt(np.clip(1 - s * s, 0.0, None))


def _values(v, arg, n) -> np.ndarray:
    if v is None:
        return np.zeros(n, dtype=complex)
    if callable(v):
        out = np.asarray(v(arg), dtype=complex)
    else:
        out = np.asarray(v, dtype=complex)
        if out.ndim == 0:
            return np.full(n, complex(out))
    if out.shape[0] != n:
        raise ValueError(f"got {out.shape[0]} values for {n} nodes")
    return out


@dataclass(frozen=True, eq=False)
class ArcObservation:
    """Observation arc with separable kernels K^(r,j)(x, y) = sum a(s_x) b(s_y).

    `kernels` maps (r, j) to a pair of callables (a, b) of the arc parameter
    s in [-1, 1] returning (M, rank) arrays; missing pairs are zero.  The
    b-factor of every K^(r,2) must vanish at the arc endpoints.
    """

    grid: OpenArcGrid
    kernels: dict
    r1: Callable | float = 1.0
    r2: Callable | float = 1.0

    def __post_init__(self):
        ends = np.array([-1.0, 1.0])
        for (r, j), (a, b) in self.kernels.items():
            if (r, j) not in PAIRS:
                raise ValueError(f"kernel index {(r, j)} not in {PAIRS}")
            if j == 2:
                be = np.abs(np.asarray(b(ends)))
                scale = max(1.0, float(np.abs(np.asarray(b(self.grid.s))).max()))
                if be.max() > 1e-8 * scale:
                    raise ValueError(f"K^({r},2) factor must vanish at the arc endpoints (use endpoint_taper)")

    def kernel_matrix(self, r: int, j: int) -> np.ndarray:
        """K^(r,j) sampled at node pairs (x, y)."""
        M = self.grid.n
        if (r, j) not in self.kernels:
            return np.zeros((M, M), dtype=complex)
        a, b = self.kernels[(r, j)]
        s = self.grid.s
        A = np.asarray(a(s), dtype=complex).reshape(M, -1)
        B = np.asarray(b(s), dtype=complex).reshape(M, -1)
        return A @ B.T

    @property
    def weights_sq(self) -> tuple[np.ndarray, np.ndarray]:
        M = self.grid.n
        return (np.abs(_values(self.r1, self.grid.s, M)) ** 2, np.abs(_values(self.r2, self.grid.s, M)) ** 2)


@dataclass(frozen=True, eq=False)
class SurfaceObservationSetup:
    grid: ClosedCurveGrid
    k: complex
    arcs: Sequence[ArcObservation]
    omega0: RegionSpec
    l0: Callable | float
    q1: Callable | float = 1.0
    h0: Callable | float | None = None
    eta: float = 1.0
    separation_factor: float = 0.05

    def __post_init__(self):
        k = _check_k(self.k)
        _check_eta(k, self.eta)
        min_separation([self.grid] + [a.grid for a in self.arcs] + [self.omega0], factor=self.separation_factor)

    @cached_property
    def asm(self) -> "_Assembly":
        return _Assembly(self)

    def replace(self, **kw) -> "SurfaceObservationSetup":
        fields = dict(grid=self.grid, k=self.k, arcs=tuple(self.arcs), omega0=self.omega0, l0=self.l0,
                      q1=self.q1, h0=self.h0, eta=self.eta, separation_factor=self.separation_factor)
        fields.update(kw)
        return SurfaceObservationSetup(**fields)


class _Assembly:
    """All matrices of one setup; arcs and the region act as weighted point sources."""

    def __init__(self, s: SurfaceObservationSetup):
        self.setup = s
        k = complex(s.k)
        kb = -np.conj(k)
        g = s.grid
        self.k, self.kb = k, kb
        self.N = g.n
        self.ops = assemble_boundary_ops(g, k)
        self.ops_adj = self.ops.conjugate_wavenumber()
        self.A = cfie_matrix(self.ops, s.eta)
        self.B = cfie_rhs_operator(self.ops, s.eta)
        self.A_adj = cfie_matrix(self.ops_adj, s.eta, adjoint=True)
        self.B_adj = cfie_rhs_operator(self.ops_adj, s.eta, adjoint=True)
        self.q1m2 = 1 / np.abs(_values(s.q1, g.x, self.N)) ** 2
        self.h0 = _values(s.h0, g.x, self.N)
        self.wG = g.weights

        xq, wq = s.omega0.quadrature()
        self.xq, self.wq = xq, wq
        self.l0 = _values(s.l0, xq, len(xq))
        # Gamma -> region (k) for evaluating p and phi_hat on omega0
        self.W_reg = layer_matrix(g, "double", k, xq)
        self.V_reg = layer_matrix(g, "single", k, xq)
        # region -> Gamma (-conj k): Newton potential trace and normal derivative
        kr = kernel_matrices(kb, g.x, xq, g.normal, None, which=("phi", "dnx"))
        self.N_phi = kr["phi"] * wq
        self.N_dn = kr["dnx"] * wq

        self.arcs = []
        for arc in s.arcs:
            ag = arc.grid
            om = ag.weights
            K = {rj: arc.kernel_matrix(*rj) for rj in PAIRS}
            R1, R2 = arc.weights_sq
            ka = kernel_matrices(kb, g.x, ag.x, g.normal, ag.normal, which=("phi", "dny", "dnx", "d2"))
            self.arcs.append(dict(
                M=ag.n, om=om, K=K, rsq={1: R1, 2: R2}, Kt=build_ktilde_arc(K, om, R1, R2),
                # arc -> Gamma at -conj k (columns weighted by the arc rule)
                DL=ka["dny"] * om, SL=ka["phi"] * om, DLn=ka["d2"] * om, SLn=ka["dnx"] * om,
                # Gamma -> arc at k
                Wd=layer_matrix(g, "double", k, ag.x), Vs=layer_matrix(g, "single", k, ag.x),
                Wdn=layer_matrix(g, "double", k, ag.x, ag.normal), Vsn=layer_matrix(g, "single", k, ag.x, ag.normal),
            ))
        self.offsets = np.cumsum([0] + [2 * a["M"] for a in self.arcs])
        self.n_arc = int(self.offsets[-1])

    # ------------------------------------------------------------------

    def zin_operators(self):
        """(Zin_G, Zin_dn): maps from stacked arc unknowns phi to Z_in|Gamma and dZ_in/dnu|Gamma via K-tilde."""
        N = self.N
        ZG = np.zeros((N, self.n_arc), dtype=complex)
        Zn = np.zeros((N, self.n_arc), dtype=complex)
        for a, off in zip(self.arcs, self.offsets):
            M = a["M"]
            Kt = a["Kt"]
            for col, l in ((slice(off, off + M), 1), (slice(off + M, off + 2 * M), 2)):
                ZG[:, col] = a["DL"] @ Kt[(1, l)] - a["SL"] @ Kt[(2, l)]
                Zn[:, col] = a["DLn"] @ Kt[(1, l)] - a["SLn"] @ Kt[(2, l)]
        return ZG, Zn

    def zin_from_rho(self, rho1s, rho2s, l0=True):
        """Z_in|Gamma and dZ_in/dnu|Gamma for given arc densities."""
        zG = -self.N_phi @ self.l0 if l0 else np.zeros(self.N, complex)
        zn = -self.N_dn @ self.l0 if l0 else np.zeros(self.N, complex)
        for a, r1, r2 in zip(self.arcs, rho1s, rho2s):
            zG = zG + a["DL"] @ r1 - a["SL"] @ r2
            zn = zn + a["DLn"] @ r1 - a["SLn"] @ r2
        return zG, zn

    def system(self) -> np.ndarray:
        """Dense matrix over (psi, chi, phi_1^(1), phi_1^(2), ...)."""
        N, na = self.N, self.n_arc
        ZG, Zn = self.zin_operators()
        Q = np.diag(self.q1m2)
        n = 2 * N + na
        S = np.zeros((n, n), dtype=complex)
        S[:N, :N] = self.A_adj
        S[:N, 2 * N:] = self.B_adj @ Zn
        S[N:2 * N, :N] = -self.B @ Q
        S[N:2 * N, N:2 * N] = self.A
        S[N:2 * N, 2 * N:] = -self.B @ Q @ ZG
        for a, off in zip(self.arcs, self.offsets):
            M = a["M"]
            for rows, Wm, Vm in ((slice(2 * N + off, 2 * N + off + M), a["Wd"], a["Vs"]),
                                 (slice(2 * N + off + M, 2 * N + off + 2 * M), a["Wdn"], a["Vsn"])):
                S[rows, :] = 0
                S[rows, rows] = np.eye(M)
                S[rows, N:2 * N] -= Wm
                S[rows, :N] += Vm @ Q
                S[rows, 2 * N:] += Vm @ Q @ ZG
        return S

    def system_rhs(self, zG0, zN0, hx) -> np.ndarray:
        """Right-hand side for fixed parts zG0, zN0 of Z_in and extra Neumann data hx."""
        N = self.N
        b = np.zeros(2 * N + self.n_arc, dtype=complex)
        b[:N] = -self.B_adj @ zN0
        hfix = self.q1m2 * zG0 + hx
        b[N:2 * N] = self.B @ hfix
        for a, off in zip(self.arcs, self.offsets):
            M = a["M"]
            b[2 * N + off:2 * N + off + M] = -a["Vs"] @ hfix
            b[2 * N + off + M:2 * N + off + 2 * M] = -a["Vsn"] @ hfix
        return b

    def split(self, x):
        N = self.N
        psi, chi = x[:N], x[N:2 * N]
        phis = []
        for a, off in zip(self.arcs, self.offsets):
            M = a["M"]
            phis.append((x[2 * N + off:2 * N + off + M], x[2 * N + off + M:2 * N + off + 2 * M]))
        return psi, chi, phis

    def observe(self, phis):
        """Noise-free observations (y^(1), y^(2)) per arc from arc traces (phi, dphi/dnu)."""
        out = []
        for a, (f1, f2) in zip(self.arcs, phis):
            K, om = a["K"], a["om"]
            out.append(tuple(K[(r, 1)] @ (om * f1) + K[(r, 2)] @ (om * f2) for r in (1, 2)))
        return out

    def weights_from_traces(self, phis):
        """u^(r) = (r^(r))^2 sum_j K^(r,j) Omega phi_j."""
        obs = self.observe(phis)
        return [tuple(a["rsq"][r] * y[r - 1] for r in (1, 2)) for a, y in zip(self.arcs, obs)]

    def w_from_weights(self, us):
        """(w_1, w_2) per arc: w_j = sum_r (K^(r,j))^H Omega u^(r)."""
        out = []
        for a, (u1, u2) in zip(self.arcs, us):
            K, om = a["K"], a["om"]
            out.append(tuple(K[(1, j)].conj().T @ (om * u1) + K[(2, j)].conj().T @ (om * u2) for j in (1, 2)))
        return out

    def arc_traces(self, chi, h):
        """(phi, dphi/dnu) on each arc for the field W chi - V h."""
        return [(a["Wd"] @ chi - a["Vs"] @ h, a["Wdn"] @ chi - a["Vsn"] @ h) for a in self.arcs]

    def functional(self, chi, h) -> complex:
        """l(phi) for phi = W chi - V h, by the omega0 tensor rule."""
        vals = self.W_reg @ chi - self.V_reg @ h
        return complex(np.sum(self.wq * np.conj(self.l0) * vals))


def build_ktilde_arc(K: dict, om, R1, R2) -> dict:
    """Composed kernels as matrices acting on nodal values (trailing arc weights included).

    K~^(1,l) = sum_r (K^(r,2))^H Omega R_r^2 K^(r,l) Omega,
    K~^(2,l) = -sum_r (K^(r,1))^H Omega R_r^2 K^(r,l) Omega.
    """
    Rs = {1: R1, 2: R2}
    out = {}
    for l in (1, 2):
        t1 = sum(K[(r, 2)].conj().T @ ((om * Rs[r])[:, None] * K[(r, l)]) for r in (1, 2))
        t2 = sum(K[(r, 1)].conj().T @ ((om * Rs[r])[:, None] * K[(r, l)]) for r in (1, 2))
        out[(1, l)] = t1 * om[None, :]
        out[(2, l)] = -t2 * om[None, :]
    return out


def build_ktilde(setup: SurfaceObservationSetup) -> list[dict]:
    """Composed kernels per arc, keyed (1,1), (1,2), (2,1), (2,2)."""
    return [a["Kt"] for a in setup.asm.arcs]


@dataclass(frozen=True, eq=False)
class SurfaceSolution:
    psi: np.ndarray
    chi: np.ndarray
    phi: list
    rho1: list
    rho2: list
    u_hat: list
    z_gamma: np.ndarray
    p_neumann: np.ndarray
    c_hat: complex
    sigma2: complex
    cond: float

    @property
    def sigma(self) -> float:
        return _sigma(self.sigma2)


def _sigma(s2: complex) -> float:
    if s2.real < -1e-10 * max(1.0, abs(s2)):
        raise NegativeSigmaSquared(f"sigma^2 = {s2}")
    return float(np.sqrt(max(s2.real, 0.0)))


def solve_surface_system(setup: SurfaceObservationSetup) -> SurfaceSolution:
    """Solve the coupled system for (psi, chi, arc traces of p) and assemble u_hat, c_hat, sigma^2."""
    A = setup.asm
    zG0 = -A.N_phi @ A.l0
    zN0 = -A.N_dn @ A.l0
    x, cond = _solve_dense(A.system(), A.system_rhs(zG0, zN0, np.zeros(A.N, complex)))
    psi, chi, phis = A.split(x)
    ZG, Zn = A.zin_operators()
    phivec = x[2 * A.N:]
    z_gamma = psi + ZG @ phivec + zG0
    hp = A.q1m2 * z_gamma
    rho = []
    for a, (f1, f2) in zip(A.arcs, phis):
        Kt = a["Kt"]
        rho.append((Kt[(1, 1)] @ f1 + Kt[(1, 2)] @ f2, Kt[(2, 1)] @ f1 + Kt[(2, 2)] @ f2))
    u_hat = A.weights_from_traces(phis)
    c_hat = complex(np.sum(A.wG * A.h0 * np.conj(z_gamma)))
    s2 = A.functional(chi, hp)
    return SurfaceSolution(psi, chi, phis, [r[0] for r in rho], [r[1] for r in rho], u_hat,
                           z_gamma, hp, c_hat, s2, cond)


def surface_estimate(sol: SurfaceSolution, setup: SurfaceObservationSetup, y) -> complex:
    """sum_i int conj(u^(1)) y^(1) + conj(u^(2)) y^(2) + c_hat."""
    A = setup.asm
    if len(y) != len(A.arcs):
        raise ValueError(f"expected data for {len(A.arcs)} arcs, got {len(y)}")
    total = sol.c_hat
    for a, (u1, u2), (y1, y2) in zip(A.arcs, sol.u_hat, y):
        y1, y2 = np.asarray(y1), np.asarray(y2)
        if y1.shape != u1.shape or y2.shape != u2.shape:
            raise ValueError("arc data do not match the arc grids")
        total += np.sum(a["om"] * (np.conj(u1) * y1 + np.conj(u2) * y2))
    return complex(total)


def surface_sigma(sol: SurfaceSolution, setup: SurfaceObservationSetup) -> float:
    """sigma = l(p)^(1/2) with p = W chi - V (q1^-2 z) evaluated on the omega0 rule."""
    s2 = setup.asm.functional(sol.chi, sol.p_neumann)
    return _sigma(s2)


def adjoint_boundary_trace(setup: SurfaceObservationSetup, us) -> np.ndarray:
    """z(.; u)|Gamma for arbitrary weights u, by arc potentials and the adjoint CFIE."""
    A = setup.asm
    ws = A.w_from_weights(us)
    zG, zn = A.zin_from_rho([w[1] for w in ws], [-w[0] for w in ws])
    scat = solve_exterior_neumann_adjoint(setup.grid, setup.k, -zn, setup.eta, ops=A.ops_adj)
    return scat.trace + zG


def worst_case_cost(setup: SurfaceObservationSetup, us) -> float:
    """I(u) = int_Gamma q1^-2 |z(.; u)|^2 + sum int (r^(r))^-2 |u^(r)|^2."""
    A = setup.asm
    z = adjoint_boundary_trace(setup, us)
    noise = sum(np.sum(a["om"] * (np.abs(u1) ** 2 / a["rsq"][1] + np.abs(u2) ** 2 / a["rsq"][2]))
                for a, (u1, u2) in zip(A.arcs, us))
    return float(np.sum(A.wG * A.q1m2 * np.abs(z) ** 2) + noise)


@dataclass(frozen=True, eq=False)
class SurfaceStochastic:
    field: ExteriorSolution
    arc_traces: list
    p_gamma: np.ndarray

    def functional(self, setup: SurfaceObservationSetup) -> complex:
        return setup.asm.functional(self.field.trace, self.field.neumann)


def solve_surface_stochastic(setup: SurfaceObservationSetup, y) -> SurfaceStochastic:
    """phi_hat whose functional values are the minimax estimates for data y.

    Same coupled matrix as the estimation system; the arc densities are driven
    by v^(r) = (r^(r))^2 (sum_j K^(r,j) Omega phi_hat_j - y^(r)) and phi_hat has
    Neumann data q1^-2 p_hat + h0.
    """
    A = setup.asm
    if len(y) != len(A.arcs):
        raise ValueError(f"expected data for {len(A.arcs)} arcs, got {len(y)}")
    # data part of the arc densities: rho1 -= w_2(r^2 y), rho2 += w_1(r^2 y)
    wy = A.w_from_weights([(a["rsq"][1] * np.asarray(y1), a["rsq"][2] * np.asarray(y2))
                           for a, (y1, y2) in zip(A.arcs, y)])
    zG0, zN0 = A.zin_from_rho([-w[1] for w in wy], [w[0] for w in wy], l0=False)
    x, cond = _solve_dense(A.system(), A.system_rhs(zG0, zN0, A.h0))
    psi, chi, phis = A.split(x)
    ZG, _ = A.zin_operators()
    p_gamma = psi + ZG @ x[2 * A.N:] + zG0
    h_hat = A.q1m2 * p_gamma + A.h0
    field = ExteriorSolution(setup.grid, complex(setup.k), complex(setup.k), chi, h_hat, setup.eta, cond)
    return SurfaceStochastic(field, phis, p_gamma)


def forward_observations(setup: SurfaceObservationSetup, h):
    """Forward solve for Neumann data h; returns (l(phi), arc traces, noise-free observations)."""
    A = setup.asm
    h = np.asarray(h, dtype=complex)
    sol = solve_exterior_neumann(setup.grid, setup.k, h, setup.eta, ops=A.ops, check_cond=False)
    traces = A.arc_traces(sol.trace, h)
    return A.functional(sol.trace, h), traces, A.observe(traces)
