"""Exterior Neumann solvers: combined-field BIE, disk oracle and DtN-truncated annulus.

The BIE path represents the exterior field as u = W phi - V g, where phi is the
boundary trace, g = du/dnu and nu points out of the obstacle.  The trace solves

    (I - K - i eta T) phi = -S g - i eta (g + K' g),

which is uniquely solvable for every k when eta Re k > 0.  The adjoint variant
uses the -conj(k) kernels (incoming waves) with the sign of eta flipped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .dtn import dtn_matrix, dtn_symbol, hankel_ratios
from .dtn import FourierTrace
from .errors import DomainError, SingularSystem
from .geometry import AnnulusSpec, ClosedCurveGrid
from .potentials import (BoundaryOperatorSet, assemble_boundary_ops, eval_layer,
                         eval_layer_normal_deriv, _check_k)

COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# combined-field integral equation


def cfie_matrix(ops: BoundaryOperatorSet, eta: float, adjoint: bool = False) -> np.ndarray:
    """I - K - i eta T, or I - K + i eta T for the adjoint (-conj k) operators."""
    s = 1.0 if adjoint else -1.0
    return np.eye(ops.grid.n) - ops.K + s * 1j * eta * ops.T


def cfie_rhs_operator(ops: BoundaryOperatorSet, eta: float, adjoint: bool = False) -> np.ndarray:
    """Matrix B with cfie_matrix @ phi = B @ g for Neumann data g."""
    s = 1.0 if adjoint else -1.0
    return -ops.S + s * 1j * eta * (np.eye(ops.grid.n) + ops.Kp)


def _check_eta(k: complex, eta: float) -> None:
    if eta * k.real < 0:
        raise ValueError(f"coupling eta={eta} must satisfy eta * Re k >= 0 (Re k = {k.real})")


def _solve_dense(A: np.ndarray, b: np.ndarray, check_cond: bool = True) -> tuple[np.ndarray, float]:
    cond = float(np.linalg.cond(A)) if check_cond else float("nan")
    if check_cond and not cond < COND_LIMIT:
        raise SingularSystem(f"condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return x, cond


@dataclass(frozen=True, eq=False)
class ExteriorSolution:
    """Boundary trace and Neumann data of an exterior field, u = W trace - V neumann.

    `kernel_k` is the wavenumber of the kernels used in the representation
    (k for outgoing, -conj(k) for incoming fields).
    """

    grid: ClosedCurveGrid
    k: complex
    kernel_k: complex
    trace: np.ndarray
    neumann: np.ndarray
    eta: float
    cond: float

    def evaluate(self, points, threshold: float | None = None) -> np.ndarray:
        P = np.atleast_2d(points)
        return (eval_layer(self.grid, self.trace, "double", self.kernel_k, P, threshold)
                - eval_layer(self.grid, self.neumann, "single", self.kernel_k, P, threshold))

    def normal_derivative(self, points, normals, threshold: float | None = None) -> np.ndarray:
        P, Nn = np.atleast_2d(points), np.atleast_2d(normals)
        return (eval_layer_normal_deriv(self.grid, self.trace, "double", self.kernel_k, P, Nn, threshold)
                - eval_layer_normal_deriv(self.grid, self.neumann, "single", self.kernel_k, P, Nn, threshold))


def _solve_cfie(grid, k, g, eta, adjoint, ops, check_cond):
    k = _check_k(k)
    _check_eta(k, eta)
    kk = -np.conj(k) if adjoint else k
    if ops is None:
        ops = assemble_boundary_ops(grid, kk)
    elif not np.isclose(ops.k, kk):
        raise ValueError(f"operators built for k={ops.k}, need {kk}")
    g = np.asarray(g, dtype=complex)
    if g.shape[0] != grid.n:
        raise ValueError(f"Neumann data has {g.shape[0]} nodes, grid has {grid.n}")
    A = cfie_matrix(ops, eta, adjoint)
    phi, cond = _solve_dense(A, cfie_rhs_operator(ops, eta, adjoint) @ g, check_cond)
    return ExteriorSolution(grid, k, kk, phi, g, float(eta), cond)


def solve_exterior_neumann(grid: ClosedCurveGrid, k, g, eta: float = 1.0,
                           ops: BoundaryOperatorSet | None = None, check_cond: bool = True) -> ExteriorSolution:
    """Outgoing exterior field with du/dnu = g on the curve."""
    return _solve_cfie(grid, k, g, eta, False, ops, check_cond)


def solve_exterior_neumann_adjoint(grid: ClosedCurveGrid, k, g, eta: float = 1.0,
                                   ops: BoundaryOperatorSet | None = None,
                                   check_cond: bool = True) -> ExteriorSolution:
    """Incoming exterior field for wavenumber conj(k) (kernels at -conj k) with du/dnu = g."""
    return _solve_cfie(grid, k, g, eta, True, ops, check_cond)


def cfie_condition(grid: ClosedCurveGrid, k, eta: float, adjoint: bool = False) -> float:
    k = _check_k(k)
    ops = assemble_boundary_ops(grid, -np.conj(k) if adjoint else k)
    return float(np.linalg.cond(cfie_matrix(ops, eta, adjoint)))


def radiation_residual(field, k, radius: float, n: int = 64, h: float = 1e-3) -> float:
    """max |du/dr - i k u| * radius on a circle, du/dr by centered differences."""
    th = 2 * np.pi * np.arange(n) / n
    e = np.stack([np.cos(th), np.sin(th)], 1)
    up, um, u0 = field(e * (radius + h)), field(e * (radius - h)), field(e * radius)
    return float(np.max(np.abs((up - um) / (2 * h) - 1j * k * u0)) * radius)


# ---------------------------------------------------------------------------
# disk oracle


def disk_neumann_exact(a: float, k, g: FourierTrace, variant: str = "outgoing"):
    """Exterior solution for the disk of radius a with du/dr = sum g_n e^{in theta} at r = a.

    Outgoing: u = sum g_n H_n^(1)(k r) / (k H_n^(1)'(k a)) e^{in theta}.
    Incoming: the same with H_n^(2) and conj(k).  Returns an evaluator of points.
    """
    if a <= 0:
        raise DomainError("disk radius must be positive")
    k = complex(k)
    if variant not in ("outgoing", "incoming"):
        raise ValueError(f"variant must be 'outgoing' or 'incoming', got {variant!r}")
    kind = 1 if variant == "outgoing" else 2
    kk = k if kind == 1 else np.conj(k)
    n = g.orders
    nf = max(g.n_f, 1)
    # u_n(a) = g_n / (dtn symbol), then Hankel ratios carry it outward
    trace_coeffs = g.coeffs / dtn_symbol(kind, k, a, n)
    qa = hankel_ratios(kind, kk * a, nf)

    def evaluate(points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(P[:, 0], P[:, 1])
        if np.any(r < a * (1 - 1e-12)):
            raise DomainError("disk oracle evaluated inside the obstacle")
        th = np.arctan2(P[:, 1], P[:, 0])
        qr = hankel_ratios(kind, kk * r, nf)
        ratio = np.empty((nf + 1, len(r)), dtype=complex)
        ratio[0] = qr[0] / qa[0]
        for m in range(1, nf + 1):
            ratio[m] = ratio[m - 1] * qr[m] / qa[m]
        return (ratio[np.abs(n)].T * np.exp(1j * np.outer(th, n))) @ trace_coeffs

    evaluate.trace = FourierTrace(a, trace_coeffs)
    return evaluate


# ---------------------------------------------------------------------------
# DtN-truncated annulus


@dataclass(frozen=True, eq=False)
class AnnulusOperator:
    """Finite-volume discretization of a(u, v) on the polar grid of `spec`.

    a(u, v) = int grad u . grad conj v - k^2 u conj v - int_{r=R} (M u) conj v,
    with lumped cell areas `mass` and boundary weights a dtheta on r = a.
    The matrix is complex symmetric; the conj(k) problem with the incoming
    DtN map is represented by its elementwise conjugate.
    """

    spec: AnnulusSpec
    k: complex
    A: sps.csc_matrix
    mass: np.ndarray
    gamma_weight: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.n_r + 1, self.spec.n_theta)

    def matrix(self, variant: int = 1) -> sps.csc_matrix:
        return self.A if variant == 1 else self.A.conj().tocsc()

    def rhs(self, forcing=None, boundary_flux=None) -> np.ndarray:
        """Load vector for volume forcing f and boundary flux g on r = a."""
        b = np.zeros(self.shape, dtype=complex)
        if forcing is not None:
            b += self.mass.reshape(self.shape) * np.asarray(forcing).reshape(self.shape)
        if boundary_flux is not None:
            b[0] += self.gamma_weight * np.asarray(boundary_flux)
        return b.ravel()

    def inner(self, u, v) -> complex:
        """Discrete int u conj(v) over the annulus."""
        return complex(np.sum(self.mass * np.ravel(u) * np.conj(np.ravel(v))))

    def form(self, u, v, variant: int = 1) -> complex:
        """Discrete sesquilinear form a(u, v) (variant 1) or a*(u, v) (variant 2)."""
        return complex(np.conj(np.ravel(v)) @ (self.matrix(variant) @ np.ravel(u)))


def annulus_operator(spec: AnnulusSpec, k) -> AnnulusOperator:
    k = _check_k(k)
    nr, nt = spec.n_r, spec.n_theta
    r = spec.r
    h = (spec.R - spec.a) / nr
    dth = 2 * np.pi / nt
    lo = np.maximum(r - h / 2, spec.a)
    hi = np.minimum(r + h / 2, spec.R)
    area = 0.5 * (hi**2 - lo**2) * dth
    # angular face coefficient: int dr / r over the cell, divided by dtheta
    cang = np.log(hi / lo) / dth
    rface = r[:-1] + h / 2
    crad = rface * dth / h

    idx = np.arange((nr + 1) * nt).reshape(nr + 1, nt)
    rows, cols, vals = [], [], []

    def couple(i1, i2, c):
        rows.extend([i1, i2, i1, i2])
        cols.extend([i1, i2, i2, i1])
        vals.extend([c, c, -c, -c])

    for i in range(nr):
        c = np.full(nt, crad[i])
        couple(idx[i], idx[i + 1], c)
    for i in range(nr + 1):
        c = np.full(nt, cang[i])
        couple(idx[i], np.roll(idx[i], -1), c)
    stiff = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(idx.size, idx.size))
    mass = np.repeat(area, nt)
    Mdtn = spec.R * dth * dtn_matrix(1, k, spec.R, nt)
    # symmetrize away rounding so the matrix is exactly complex symmetric
    Mdtn = 0.5 * (Mdtn + Mdtn.T)
    outer = idx[-1]
    B = sps.coo_matrix((Mdtn.ravel(), (np.repeat(outer, nt), np.tile(outer, nt))), shape=stiff.shape)
    A = (stiff - k**2 * sps.diags(mass) - B).tocsc()
    return AnnulusOperator(spec, k, A, mass, spec.a * dth)


@dataclass(frozen=True, eq=False)
class AnnulusField:
    spec: AnnulusSpec
    values: np.ndarray

    @property
    def outer_trace(self) -> FourierTrace:
        return FourierTrace.from_samples(self.spec.R, self.values[-1], self.spec.n_f)

    def extend(self, k, points) -> np.ndarray:
        """Exterior extension by the Hankel series of the trace on r = R."""
        from .dtn import exterior_extend
        return exterior_extend(k, self.outer_trace, points)


def sparse_solve(A, b) -> np.ndarray:
    try:
        x = spla.spsolve(A.tocsc(), b)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("sparse solve produced non-finite values")
    return x


def solve_annulus_dtn(spec: AnnulusSpec, k, forcing=None, boundary_flux=None, variant: int = 1,
                      op: AnnulusOperator | None = None) -> AnnulusField:
    """Solve -(Lap + k^2) u = f in the annulus with the DtN condition on r = R.

    `boundary_flux` g enters the weak form as + int_{r=a} g conj(v), i.e.
    g = -du/dr on r = a (normal pointing into the obstacle).  Variant 2 solves
    the conj(k) problem with the incoming DtN map.  Arrays are shaped
    (n_r + 1, n_theta).
    """
    op = op or annulus_operator(spec, k)
    x = sparse_solve(op.matrix(variant), op.rhs(forcing, boundary_flux))
    return AnnulusField(spec, x.reshape(op.shape))
