"""Minimax estimation from observations distributed over subdomains (disk obstacle).

The forward state solves -(Lap + k^2) phi = f outside the disk r < a with
boundary flux g on r = a and the outgoing DtN condition on r = R.  The data
(f, g) lie in the ellipsoid

    int_{Omega0} q1^2 |f - f0|^2 + int_Gamma q2^2 |g - g0|^2 <= 1,

and the observations are y_k = G_k phi + xi_k on Omega_k with zero-mean noise
bounded by sum_k int r_k^2 E|xi_k|^2 <= 1.  The kernels are separable,
g_k(x, y) = sum_r a_r(x) b_r(y).

Everything is discretized on the finite-volume polar grid of forward.py, whose
matrix A is complex symmetric; conj(A) is the adjoint (conj k, incoming)
problem, so the discrete duality identities hold to rounding.  The coupled
z-p systems are assembled as one sparse matrix, with the kernel moments
b_r^T M p carried as extra unknowns.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps

from .errors import RegionViolation
from .forward import AnnulusField, AnnulusOperator, annulus_operator, sparse_solve
from .geometry import AnnulusSpec, RegionSpec


def sample(value, points) -> np.ndarray:
    """Evaluate a callable, broadcast a scalar, or pass through an array at points (n, 2)."""
    P = np.atleast_2d(points)
    if value is None:
        return np.zeros(len(P), dtype=complex)
    if callable(value):
        out = np.asarray(value(P), dtype=complex)
    else:
        out = np.asarray(value, dtype=complex)
        if out.ndim == 0:
            return np.full(len(P), complex(out))
    if out.shape[0] != len(P):
        raise ValueError(f"field has {out.shape[0]} values for {len(P)} points")
    return out


@dataclass(frozen=True, eq=False)
class SubdomainObservation:
    """Observation y = int_Omega g(x, y) phi(y) dy + noise on `region`.

    `a` and `b` map points (n, 2) to factor matrices (n, rank); `r` is the
    positive noise weight.
    """

    region: RegionSpec
    a: Callable
    b: Callable
    r: Callable | float = 1.0


@dataclass(frozen=True, eq=False)
class SubdomainSetup:
    annulus: AnnulusSpec
    k: complex
    omega0: RegionSpec
    Omega0: RegionSpec
    observations: Sequence[SubdomainObservation] = ()
    q1: Callable | float = 1.0
    q2: Callable | float = 1.0
    f0: Callable | float | None = None
    g0: Callable | float | None = None

    def __post_init__(self):
        for reg in [self.omega0, self.Omega0] + [o.region for o in self.observations]:
            check_region(reg, self.annulus)

    @cached_property
    def disc(self) -> "Discretization":
        return Discretization(self)

    def with_annulus(self, annulus: AnnulusSpec) -> "SubdomainSetup":
        return SubdomainSetup(annulus, self.k, self.omega0, self.Omega0, tuple(self.observations),
                              self.q1, self.q2, self.f0, self.g0)

    def with_observations(self, observations) -> "SubdomainSetup":
        return SubdomainSetup(self.annulus, self.k, self.omega0, self.Omega0, tuple(observations),
                              self.q1, self.q2, self.f0, self.g0)


def check_region(region: RegionSpec, ann: AnnulusSpec) -> None:
    """RegionViolation unless the closed region sits inside a < r < R."""
    if region.kind == "disk":
        cx, cy, rad = region.params
        c = np.hypot(cx, cy)
        rmin, rmax = c - rad, c + rad
    else:
        x0, y0, x1, y1 = region.params
        rmin = float(region.distance(np.zeros((1, 2)))[0])
        rmax = max(np.hypot(x, y) for x in (x0, x1) for y in (y0, y1))
    if not (rmin > ann.a and rmax < ann.R):
        raise RegionViolation(f"region {region.kind} {region.params} spans r in [{rmin:.4g}, {rmax:.4g}], "
                              f"outside the open annulus ({ann.a}, {ann.R})")


def coverage(region: RegionSpec, ann: AnnulusSpec, sub: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Grid nodes whose finite-volume cells meet `region`, with the covered fraction of each cell.

    Cells straddling the region boundary are sub-sampled on a sub x sub
    midpoint lattice in (r, theta); this keeps region integrals second order
    in the grid spacing instead of the first order of a node mask.
    """
    r, th = ann.r, ann.theta
    h = (ann.R - ann.a) / ann.n_r
    dth = 2 * np.pi / ann.n_theta
    lo = np.maximum(r - h / 2, ann.a)
    hi = np.minimum(r + h / 2, ann.R)
    pts = ann.points()
    inside = region.contains(pts).astype(float)
    # a cell can be cut only if its node is within one cell diameter of the region boundary
    diam = np.repeat(np.hypot(hi - lo, hi * dth), ann.n_theta)
    dist_out = region.distance(pts)
    near = (dist_out < diam) & (_depth(region, pts) < diam)
    frac = inside
    cand = np.flatnonzero(near)
    if len(cand):
        s = (np.arange(sub) + 0.5) / sub
        frac = frac.copy()
        for chunk in np.array_split(cand, max(1, len(cand) // 256)):
            i, j = np.divmod(chunk, ann.n_theta)
            rr = lo[i][:, None] + (hi - lo)[i][:, None] * s[None, :]
            tt = th[j][:, None] + dth * (s[None, :] - 0.5)
            R3 = np.repeat(rr[:, :, None], sub, 2)
            T3 = np.repeat(tt[:, None, :], sub, 1)
            P = np.stack([(R3 * np.cos(T3)).ravel(), (R3 * np.sin(T3)).ravel()], 1)
            hit = region.contains(P).reshape(len(chunk), sub, sub)
            # sub-cells carry area proportional to their radius
            frac[chunk] = (hit * R3).sum((1, 2)) / R3.sum((1, 2))
    idx = np.flatnonzero(frac > 0)
    return idx, frac[idx]


def _depth(region: RegionSpec, pts) -> np.ndarray:
    """Distance from points inside the region to its boundary (0 outside)."""
    if region.kind == "disk":
        cx, cy, rad = region.params
        return np.maximum(rad - np.hypot(pts[:, 0] - cx, pts[:, 1] - cy), 0.0)
    x0, y0, x1, y1 = region.params
    d = np.minimum.reduce([pts[:, 0] - x0, x1 - pts[:, 0], pts[:, 1] - y0, y1 - pts[:, 1]])
    return np.maximum(d, 0.0)


class Discretization:
    """Grid quantities shared by all solves of one setup."""

    def __init__(self, setup: SubdomainSetup):
        self.setup = setup
        ann = setup.annulus
        self.op: AnnulusOperator = annulus_operator(ann, setup.k)
        self.points = ann.points()
        self.n = len(self.points)
        self.mass = self.op.mass
        self.gamma_idx = np.arange(ann.n_theta)
        self.gamma_points = self.points[: ann.n_theta]
        self.gamma_w = self.op.gamma_weight

        def mask(region):
            idx, frac = coverage(region, ann)
            if len(idx) == 0:
                raise RegionViolation(f"region {region.kind} {region.params} contains no grid nodes")
            return idx, self.mass[idx] * frac

        self.idx_omega0, self.m_omega0 = mask(setup.omega0)
        self.idx_Omega0, self.m_Omega0 = mask(setup.Omega0)
        self.q1m2 = 1 / np.abs(sample(setup.q1, self.points[self.idx_Omega0])) ** 2
        self.q2m2 = 1 / np.abs(sample(setup.q2, self.gamma_points)) ** 2
        self.obs = []
        for o in setup.observations:
            idx, m = mask(o.region)
            P = self.points[idx]
            a = np.asarray(o.a(P), dtype=complex).reshape(len(idx), -1)
            b = np.asarray(o.b(P), dtype=complex).reshape(len(idx), -1)
            if a.shape != b.shape:
                raise ValueError("kernel factors a and b must have equal rank")
            r2 = np.abs(sample(o.r, P)) ** 2
            self.obs.append(_ObsDisc(idx, a, b, r2, m))

    # loads and pairings -------------------------------------------------

    def volume_load(self, idx, meas, values) -> np.ndarray:
        b = np.zeros(self.n, dtype=complex)
        b[idx] = meas * values
        return b

    def boundary_load(self, values) -> np.ndarray:
        b = np.zeros(self.n, dtype=complex)
        b[self.gamma_idx] = self.gamma_w * values
        return b

    @staticmethod
    def pair_region(meas, u, v) -> complex:
        """sum over region nodes of (covered cell area) * u * conj(v)."""
        return complex(np.sum(meas * u * np.conj(v)))

    def pair_gamma(self, u, v) -> complex:
        return complex(self.gamma_w * np.sum(u * np.conj(v)))

    # observation operators ---------------------------------------------

    def observe(self, phi) -> list[np.ndarray]:
        """G_k phi on each observation region."""
        phi = np.ravel(phi)
        return [o.a @ (o.b.T @ (o.m * phi[o.idx])) for o in self.obs]

    def adjoint_load(self, vs) -> np.ndarray:
        """Load vector of sum_k G_k^* v_k, (G^* v)(y) = int conj g(x, y) v(x) dx, tested on the cells."""
        out = np.zeros(self.n, dtype=complex)
        for o, v in zip(self.obs, vs):
            out[o.idx] += o.m * (np.conj(o.b) @ (np.conj(o.a).T @ (o.m * v)))
        return out

    # coupled system -----------------------------------------------------

    def coupled_matrix(self, z_source_sign: float = 1.0) -> sps.csc_matrix:
        """Block matrix for unknowns (z, p, c) with c_k = b_k^T M p.

        Rows: conj(A) z + s * sum_k M conj(b_k) C_k c_k = load_z
              A p - M chi Q1^-1 z - B Q2^-1 z = load_p
              c_k - b_k^T M p = 0,
        where C_k = a_k^H diag(m r_k^2) a_k and s = z_source_sign.  With s = 1
        this is the estimation system (z source chi l0 - sum G^* u_hat).
        """
        n = self.n
        A = self.op.A
        coup = sps.csr_matrix((self.m_Omega0 * self.q1m2, (self.idx_Omega0, self.idx_Omega0)),
                              shape=(n, n))
        gam = sps.csr_matrix((self.gamma_w * self.q2m2, (self.gamma_idx, self.gamma_idx)), shape=(n, n))
        ranks = [o.a.shape[1] for o in self.obs]
        nc = sum(ranks)
        Zc = sps.lil_matrix((n, nc), dtype=complex)
        Cp = sps.lil_matrix((nc, n), dtype=complex)
        off = 0
        for o, rk in zip(self.obs, ranks):
            C = np.conj(o.a).T @ ((o.m * o.r2)[:, None] * o.a)
            Zc[o.idx, off:off + rk] = z_source_sign * (o.m[:, None] * np.conj(o.b)) @ C
            Cp[off:off + rk, o.idx] = -(o.b * o.m[:, None]).T
            off += rk
        top = sps.hstack([self.op.matrix(2), sps.csr_matrix((n, n)), Zc])
        mid = sps.hstack([-(coup + gam), A, sps.csr_matrix((n, nc))])
        bot = sps.hstack([sps.csr_matrix((nc, n)), Cp, sps.identity(nc, format="csr")])
        return sps.vstack([top, mid, bot]).tocsc()

    def n_aux(self) -> int:
        return sum(o.a.shape[1] for o in self.obs)

    def weights_from_p(self, p) -> list[np.ndarray]:
        """u_k = r_k^2 G_k p."""
        return [o.r2 * g for o, g in zip(self.obs, self.observe(p))]


@dataclass(frozen=True, eq=False)
class _ObsDisc:
    idx: np.ndarray
    a: np.ndarray
    b: np.ndarray
    r2: np.ndarray
    m: np.ndarray


@dataclass(frozen=True, eq=False)
class SubdomainEstimator:
    z: AnnulusField
    p: AnnulusField
    u_hat: list
    c_hat: complex
    sigma: float
    sigma2: complex


def _field(setup, x) -> AnnulusField:
    ann = setup.annulus
    return AnnulusField(ann, np.asarray(x).reshape(ann.n_r + 1, ann.n_theta))


def functional(setup: SubdomainSetup, l0, phi) -> complex:
    """l(phi) = int_{omega0} conj(l0) phi on the grid."""
    d = setup.disc
    lv = sample(l0, d.points[d.idx_omega0])
    return complex(np.sum(d.m_omega0 * np.conj(lv) * np.ravel(phi)[d.idx_omega0]))


def _nominal_c(d: Discretization, z, zf=None, zg=None) -> complex:
    s = d.setup
    f0 = sample(s.f0, d.points[d.idx_Omega0])
    g0 = sample(s.g0, d.gamma_points)
    zf = z[d.idx_Omega0] if zf is None else zf
    zg = z[d.gamma_idx] if zg is None else zg
    return d.pair_region(d.m_Omega0, f0, zf) + d.pair_gamma(g0, zg)


def _sigma_from(s2: complex) -> float:
    from .errors import NegativeSigmaSquared
    if s2.real < -1e-10 * max(1.0, abs(s2)):
        raise NegativeSigmaSquared(f"sigma^2 = {s2}")
    return float(np.sqrt(max(s2.real, 0.0)))


def solve_zp(setup: SubdomainSetup, l0) -> SubdomainEstimator:
    """Optimal weights u_hat, offset c_hat and error sigma for l(phi) = int_{omega0} conj(l0) phi."""
    d = setup.disc
    n = d.n
    rhs = np.zeros(2 * n + d.n_aux(), dtype=complex)
    rhs[:n] = d.volume_load(d.idx_omega0, d.m_omega0, sample(l0, d.points[d.idx_omega0]))
    x = sparse_solve(d.coupled_matrix(), rhs)
    z, p = x[:n], x[n:2 * n]
    u_hat = d.weights_from_p(p)
    s2 = functional(setup, l0, p)
    return SubdomainEstimator(_field(setup, z), _field(setup, p), u_hat, _nominal_c(d, z), _sigma_from(s2), s2)


def estimate_value(est: SubdomainEstimator, setup: SubdomainSetup, y) -> complex:
    """sum_k int conj(u_hat_k) y_k + c_hat."""
    d = setup.disc
    if len(y) != len(d.obs):
        raise ValueError(f"expected {len(d.obs)} observation arrays, got {len(y)}")
    total = est.c_hat
    for o, u, yk in zip(d.obs, est.u_hat, y):
        yk = np.asarray(yk)
        if yk.shape != u.shape:
            raise ValueError(f"observation shape {yk.shape} does not match region grid {u.shape}")
        total += np.sum(o.m * np.conj(u) * yk)
    return complex(total)


def adjoint_state(setup: SubdomainSetup, l0, u) -> np.ndarray:
    """z(.; u): conj(k) problem with source chi_{omega0} l0 - sum G_k^* u_k, zero flux on r = a."""
    d = setup.disc
    b = d.volume_load(d.idx_omega0, d.m_omega0, sample(l0, d.points[d.idx_omega0])) if l0 is not None else np.zeros(d.n, complex)
    b -= d.adjoint_load(u)
    return sparse_solve(d.op.matrix(2), b)


def _noise_cost(d: Discretization, u) -> float:
    return float(sum(np.sum(o.m * np.abs(uk) ** 2 / o.r2) for o, uk in zip(d.obs, u)))


def worst_case_cost(setup: SubdomainSetup, l0, u) -> float:
    """I(u) = int Q1^-1 |z|^2 + int_Gamma Q2^-1 |z|^2 + sum int r^-2 |u|^2 with z = z(.; u)."""
    d = setup.disc
    z = adjoint_state(setup, l0, u)
    zf, zg = z[d.idx_Omega0], z[d.gamma_idx]
    return float(np.sum(d.m_Omega0 * d.q1m2 * np.abs(zf) ** 2)
                 + d.gamma_w * np.sum(d.q2m2 * np.abs(zg) ** 2) + _noise_cost(d, u))


def solve_stochastic(setup: SubdomainSetup, y) -> tuple[AnnulusField, AnnulusField]:
    """(p_hat, phi_hat) with l(phi_hat) equal to the minimax estimate for every functional.

    conj(A) p_hat = M sum G_k^* r_k^2 (y_k - G_k phi_hat),
    A phi_hat = M chi (Q1^-1 p_hat + f0) + B (Q2^-1 p_hat + g0).
    """
    d = setup.disc
    n = d.n
    if len(y) != len(d.obs):
        raise ValueError(f"expected {len(d.obs)} observation arrays, got {len(y)}")
    rhs = np.zeros(2 * n + d.n_aux(), dtype=complex)
    rhs[:n] = d.adjoint_load([o.r2 * np.asarray(yk) for o, yk in zip(d.obs, y)])
    s = setup
    rhs[n:2 * n] = (d.volume_load(d.idx_Omega0, d.m_Omega0, sample(s.f0, d.points[d.idx_Omega0]))
                    + d.boundary_load(sample(s.g0, d.gamma_points)))
    # same block structure as the z-p system with unknowns (p_hat, phi_hat)
    x = sparse_solve(d.coupled_matrix(), rhs)
    return _field(setup, x[:n]), _field(setup, x[n:2 * n])


@dataclass(frozen=True, eq=False)
class RhsEstimator:
    z: AnnulusField
    p: AnnulusField
    u_hat: list
    c_hat: complex
    sigma: float
    sigma2: complex


def solve_rhs(setup: SubdomainSetup, l0=None, l1=None) -> RhsEstimator:
    """Weights and error for l(F) = int_{Omega0} conj(l0) f + int_Gamma conj(l1) g.

    z solves the conj(k) problem with source -sum G_k^* u_hat; p is driven by
    Q1^-1 (z + l0) in Omega0 and flux Q2^-1 (z + l1) on Gamma.
    """
    d = setup.disc
    n = d.n
    l0v = sample(l0, d.points[d.idx_Omega0])
    l1v = sample(l1, d.gamma_points)
    rhs = np.zeros(2 * n + d.n_aux(), dtype=complex)
    rhs[n:2 * n] = d.volume_load(d.idx_Omega0, d.m_Omega0, d.q1m2 * l0v) + d.boundary_load(d.q2m2 * l1v)
    x = sparse_solve(d.coupled_matrix(), rhs)
    z, p = x[:n], x[n:2 * n]
    u_hat = d.weights_from_p(p)
    zf, zg = z[d.idx_Omega0] + l0v, z[d.gamma_idx] + l1v
    c_hat = _nominal_c(d, z, zf, zg)
    s2 = d.pair_region(d.m_Omega0, d.q1m2 * zf, l0v) + d.pair_gamma(d.q2m2 * zg, l1v)
    return RhsEstimator(_field(setup, z), _field(setup, p), u_hat, c_hat, _sigma_from(s2), s2)


def estimate_rhs(setup: SubdomainSetup, l0, l1, y) -> tuple[complex, float]:
    """Minimax estimate of l(F) from observations y and its error sigma = l(P)^(1/2)."""
    est = solve_rhs(setup, l0, l1)
    return estimate_value(est, setup, y), est.sigma


def rhs_functional(setup: SubdomainSetup, l0, l1, f, g) -> complex:
    """l(F) for volume data f on Omega0 and flux g on Gamma, both given as node values or callables."""
    d = setup.disc
    P = d.points[d.idx_Omega0]
    return (d.pair_region(d.m_Omega0, sample(f, P), sample(l0, P))
            + d.pair_gamma(sample(g, d.gamma_points), sample(l1, d.gamma_points)))


def worst_case_cost_rhs(setup: SubdomainSetup, l0, l1, u) -> float:
    """I(u) for the right-hand-side functional: Q-weighted norms of l + z(.; u) plus the noise term."""
    d = setup.disc
    z = adjoint_state(setup, None, u)
    zf = z[d.idx_Omega0] + sample(l0, d.points[d.idx_Omega0])
    zg = z[d.gamma_idx] + sample(l1, d.gamma_points)
    return float(np.sum(d.m_Omega0 * d.q1m2 * np.abs(zf) ** 2)
                 + d.gamma_w * np.sum(d.q2m2 * np.abs(zg) ** 2) + _noise_cost(d, u))


def forward_state(setup: SubdomainSetup, f=None, g=None) -> np.ndarray:
    """phi on the grid for volume data f (restricted to Omega0) and boundary flux g."""
    d = setup.disc
    b = (d.volume_load(d.idx_Omega0, d.m_Omega0, sample(f, d.points[d.idx_Omega0]))
         + d.boundary_load(sample(g, d.gamma_points)))
    return sparse_solve(d.op.A, b)
