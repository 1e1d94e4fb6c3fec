"""Fundamental solutions, layer and volume potentials, and Nystrom boundary operators.

Boundary operators follow the normalization with a factor 2 in front of each
integral:

    S psi   = 2 int Phi(x, y) psi(y) ds_y
    K psi   = 2 int dPhi/dnu_y psi(y) ds_y
    K' psi  = 2 int dPhi/dnu_x psi(y) ds_y
    T psi   = 2 d/dnu_x int dPhi/dnu_y psi(y) ds_y

while the potentials V psi = int Phi psi and W psi = int dPhi/dnu_y psi carry
no factor.  With the outward normal nu the exterior traces are

    V psi = S psi / 2,     W psi = (psi + K psi) / 2,
    dV psi/dnu = -(psi - K' psi) / 2,     dW psi/dnu = T psi / 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError, NearFieldError
from .geometry import ClosedCurveGrid, RegionSpec, curve_grid
from .specfun import h0h1

EULER = 0.57721566490153286061


def _check_k(k) -> complex:
    k = complex(k)
    if k == 0:
        raise DomainError("wavenumber k = 0 is excluded")
    if k.imag < 0:
        raise DomainError("wavenumber must satisfy Im k >= 0")
    return k


# ---------------------------------------------------------------------------
# pointwise kernels


class KernelBundle(NamedTuple):
    phi: complex
    dphi_dny: complex
    dphi_dnx: complex
    d2phi: complex


def kernel_matrices(k, targets, sources, nx=None, ny=None, which=("phi",), dim=2):
    """Kernel values for every (target, source) pair; returns a dict keyed by `which`.

    Entries: 'phi', 'dny' (dPhi/dnu_y), 'dnx' (dPhi/dnu_x), 'd2' (d2Phi/dnu_x dnu_y).
    """
    k = complex(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    Y = np.atleast_2d(np.asarray(sources, dtype=float))
    d = X[:, None, :] - Y[None, :, :]
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0):
        raise DomainError("kernel evaluated at coincident points x = y")
    dnx = np.einsum("tsc,tc->ts", d, nx) if nx is not None else None
    dny = np.einsum("tsc,sc->ts", d, ny) if ny is not None else None
    out = {}
    if dim == 2:
        H0, H1 = h0h1(k, r)
        for w in which:
            if w == "phi":
                out[w] = 0.25j * H0
            elif w == "dny":
                out[w] = 0.25j * k * H1 * dny / r
            elif w == "dnx":
                out[w] = -0.25j * k * H1 * dnx / r
            elif w == "d2":
                nn = nx @ ny.T
                out[w] = (0.25j * k * H1 / r**3 * (nn * r**2 - 2 * dnx * dny)
                          + 0.25j * k**2 * H0 / r**2 * dnx * dny)
            else:
                raise ValueError(f"unknown kernel {w!r}")
    elif dim == 3:
        e = np.exp(1j * k * r)
        g = e * (1 - 1j * k * r) / r**3
        for w in which:
            if w == "phi":
                out[w] = e / (4 * np.pi * r)
            elif w == "dny":
                out[w] = dny * g / (4 * np.pi)
            elif w == "dnx":
                out[w] = -dnx * g / (4 * np.pi)
            elif w == "d2":
                nn = nx @ ny.T
                out[w] = (nn * g + dnx * dny * e * (k**2 / r**3 - 3 * (1 - 1j * k * r) / r**5)) / (4 * np.pi)
            else:
                raise ValueError(f"unknown kernel {w!r}")
    else:
        raise DomainError(f"dim must be 2 or 3, got {dim}")
    return out


def fundamental(dim: int, k, x, y) -> complex:
    """Phi_k(x, y): (i/4) H_0^(1)(k|x-y|) in 2D, exp(ik|x-y|)/(4 pi |x-y|) in 3D."""
    k = _check_k(k)
    return complex(kernel_matrices(k, [x], [y], dim=dim)["phi"][0, 0])


def kernel_bundle(dim: int, k, x, y, nx, ny) -> KernelBundle:
    """Phi and its normal derivatives at one pair of points with unit normals nx, ny."""
    k = _check_k(k)
    m = kernel_matrices(k, [x], [y], np.atleast_2d(nx), np.atleast_2d(ny),
                        which=("phi", "dny", "dnx", "d2"), dim=dim)
    return KernelBundle(*(complex(m[w][0, 0]) for w in ("phi", "dny", "dnx", "d2")))


# ---------------------------------------------------------------------------
# Nystrom boundary operators


@dataclass(frozen=True, eq=False)
class BoundaryOperatorSet:
    S: np.ndarray
    K: np.ndarray
    Kp: np.ndarray
    T: np.ndarray
    k: complex
    grid: ClosedCurveGrid

    def conjugate_wavenumber(self) -> "BoundaryOperatorSet":
        """Operators for -conj(k); exact because Phi_{-conj k} = conj(Phi_k)."""
        return BoundaryOperatorSet(self.S.conj(), self.K.conj(), self.Kp.conj(), self.T.conj(),
                                   -np.conj(self.k), self.grid)


def kress_weights(N: int) -> np.ndarray:
    """Matrix of the trigonometric quadrature weights for the ln(4 sin^2((t-tau)/2)) factor."""
    n = N // 2
    m = np.arange(N)
    p = np.arange(1, n)
    tdiff = m * np.pi / n
    row = -(2 * np.pi / n) * (np.cos(np.outer(tdiff, p)) / p).sum(axis=1) - (np.pi / n**2) * np.cos(n * tdiff)
    idx = np.abs(np.subtract.outer(np.arange(N), np.arange(N)))
    return row[idx]


def diff_matrix(N: int) -> np.ndarray:
    """Spectral differentiation d/dt on N equispaced periodic nodes (N even)."""
    i = np.arange(N)
    dm = np.subtract.outer(i, i)
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** dm / np.tan(dm * np.pi / N)
    D[dm == 0] = 0.0
    return D


def assemble_boundary_ops(grid: ClosedCurveGrid, k) -> BoundaryOperatorSet:
    """S, K, K' by logarithmic splitting; T by the Maue identity with spectral d/ds."""
    k = _check_k(k)
    if k.real < 0:
        return assemble_boundary_ops(grid, -np.conj(k)).conjugate_wavenumber()
    N = grid.n
    n = N // 2
    X, sp, nu = grid.x, grid.speed, grid.normal
    d = X[:, None, :] - X[None, :, :]
    r = np.sqrt(np.sum(d * d, -1))
    diag = np.eye(N, dtype=bool)
    r[diag] = 1.0
    kr = k * r
    H0, H1 = special.hankel1(0, kr), special.hankel1(1, kr)
    J0, J1 = special.jv(0, kr), special.jv(1, kr)
    tdiff = np.subtract.outer(grid.t, grid.t)
    with np.errstate(divide="ignore"):
        logt = np.log(4 * np.sin(tdiff / 2) ** 2)
    logt[diag] = 0.0
    R = kress_weights(N)
    w = np.pi / n
    spj = sp[None, :]

    M = 0.5j * H0 * spj
    M1 = -J0 * spj / (2 * np.pi)
    M1[diag] = -sp / (2 * np.pi)
    M2 = M - M1 * logt
    M2[diag] = (0.5j - EULER / np.pi - np.log(k * sp / 2) / np.pi) * sp
    S = R * M1 + w * M2

    curv = np.einsum("ic,ic->i", nu, grid.ddx) / sp / (2 * np.pi)
    nd_y = np.einsum("ijc,jc->ij", d, nu)
    L = 0.5j * k * nd_y * H1 / r * spj
    L1 = -k * nd_y * J1 / r * spj / (2 * np.pi)
    L1[diag] = 0.0
    L2 = L - L1 * logt
    L2[diag] = curv
    K = R * L1 + w * L2

    nd_x = np.einsum("ijc,ic->ij", d, nu)
    Lp = -0.5j * k * nd_x * H1 / r * spj
    Lp1 = k * nd_x * J1 / r * spj / (2 * np.pi)
    Lp1[diag] = 0.0
    Lp2 = Lp - Lp1 * logt
    Lp2[diag] = curv
    Kp = R * Lp1 + w * Lp2

    Dt = diff_matrix(N)
    Ds = Dt / sp[:, None]
    T = Ds @ S @ Ds + k**2 * sum(nu[:, c, None] * S * nu[None, :, c] for c in range(2))
    return BoundaryOperatorSet(S, K, Kp, T, k, grid)


# ---------------------------------------------------------------------------
# layer potentials off the curve


def curve_distance(grid: ClosedCurveGrid, targets) -> np.ndarray:
    fine = curve_grid(grid.curve, max(1024, 8 * grid.n))
    X = np.atleast_2d(targets)
    return np.sqrt(((X[:, None, :] - fine.x[None]) ** 2).sum(-1)).min(axis=1)


def default_threshold(grid: ClosedCurveGrid) -> float:
    d = grid.x[:, None, :] - grid.x[None]
    return 0.05 * float(np.sqrt((d * d).sum(-1)).max())


def trig_resample(values: np.ndarray, M: int) -> np.ndarray:
    """Trigonometric interpolation of periodic nodal values (along axis 0) to M >= N nodes."""
    values = np.asarray(values, dtype=complex)
    N = values.shape[0]
    if M == N:
        return values
    c = np.fft.fft(values, axis=0)
    out = np.zeros((M,) + values.shape[1:], dtype=complex)
    h = N // 2
    out[:h] = c[:h]
    out[M - h + 1:] = c[h + 1:]
    out[h] = 0.5 * c[h]
    out[M - h] += 0.5 * c[h]
    return np.fft.ifft(out, axis=0) * (M / N)


def _fine_for(grid: ClosedCurveGrid, dmin: float, cap: int = 65536) -> int:
    hmax = 2 * np.pi * grid.speed.max() / grid.n
    need = grid.n
    if hmax > dmin / 6:
        need = int(math.ceil(2 * np.pi * grid.speed.max() * 6 / dmin))
        need += need % 2
    return min(max(need, grid.n), max(cap, grid.n))


def _layer_sum(grid, density, kind, k, targets, tnormals, deriv, dmin):
    M = _fine_for(grid, dmin)
    g = grid if M == grid.n else curve_grid(grid.curve, M)
    dens = np.asarray(density, dtype=complex) if M == grid.n else trig_resample(density, M)
    if kind == "single":
        key = "dnx" if deriv else "phi"
    elif kind == "double":
        key = "d2" if deriv else "dny"
    else:
        raise ValueError(f"kind must be 'single' or 'double', got {kind!r}")
    ker = kernel_matrices(k, targets, g.x, tnormals, g.normal, which=(key,))[key]
    return ker @ (g.weights * dens)


def eval_layer(grid: ClosedCurveGrid, density, kind: str, k, targets, threshold: float | None = None):
    """V psi (kind='single') or W psi (kind='double') at targets off the curve."""
    k = _check_k(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    dist = curve_distance(grid, X)
    thr = default_threshold(grid) if threshold is None else threshold
    if np.any(dist < thr):
        raise NearFieldError(f"target at distance {dist.min():.3g} < threshold {thr:.3g}")
    return _layer_sum(grid, density, kind, k, X, None, False, dist.min())


def eval_layer_normal_deriv(grid: ClosedCurveGrid, density, kind: str, k, targets, normals,
                            threshold: float | None = None):
    """d/dnu_x of V psi or W psi at targets with unit normals."""
    k = _check_k(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    Nx = np.atleast_2d(np.asarray(normals, dtype=float))
    dist = curve_distance(grid, X)
    thr = default_threshold(grid) if threshold is None else threshold
    if np.any(dist < thr):
        raise NearFieldError(f"target at distance {dist.min():.3g} < threshold {thr:.3g}")
    return _layer_sum(grid, density, kind, k, X, Nx, True, dist.min())


def layer_matrix(grid: ClosedCurveGrid, kind: str, k, targets, normals=None,
                 threshold: float | None = None) -> np.ndarray:
    """Matrix taking nodal densities to V psi / W psi (or their d/dnu_x when `normals` is given)."""
    k = _check_k(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    dist = curve_distance(grid, X)
    thr = default_threshold(grid) if threshold is None else threshold
    if np.any(dist < thr):
        raise NearFieldError(f"target at distance {dist.min():.3g} < threshold {thr:.3g}")
    M = _fine_for(grid, dist.min())
    g = grid if M == grid.n else curve_grid(grid.curve, M)
    interp = np.eye(grid.n) if M == grid.n else trig_resample(np.eye(grid.n), M)
    deriv = normals is not None
    key = {("single", False): "phi", ("single", True): "dnx",
           ("double", False): "dny", ("double", True): "d2"}.get((kind, deriv))
    if key is None:
        raise ValueError(f"kind must be 'single' or 'double', got {kind!r}")
    Nx = None if normals is None else np.atleast_2d(np.asarray(normals, dtype=float))
    ker = kernel_matrices(k, X, g.x, Nx, g.normal, which=(key,))[key]
    return ker @ (g.weights[:, None] * interp)


def boundary_trace_jump_check(grid: ClosedCurveGrid, density, k, ops: BoundaryOperatorSet | None = None,
                              n_steps: int = 12, degree: int = 9, max_targets: int = 32):
    """Compare exterior limits of V, W and their normal derivatives with the operator traces.

    Limits are obtained by polynomial extrapolation in the normal offset
    delta -> 0+ from evaluations at small offsets with upsampled quadrature,
    at up to `max_targets` evenly spaced nodes.  Returns the max residual of
    each relation scaled by max(1, max|density|).  `density` may hold several
    densities as columns; the worst case over columns is reported.
    """
    k = _check_k(k)
    ops = ops or assemble_boundary_ops(grid, k)
    psi = np.asarray(density, dtype=complex)
    scale = max(1.0, float(np.abs(psi).max()))
    sel = np.arange(0, grid.n, max(1, grid.n // max_targets))
    dmax = 0.15 * default_threshold(grid)
    deltas = dmax * (0.5 - 0.5 * np.cos(np.pi * (np.arange(n_steps) + 0.5) / n_steps)) + 0.1 * dmax
    nu = grid.normal[sel]
    vals = {key: [] for key in ("V", "W", "dV", "dW")}
    for dl in deltas:
        X = grid.x[sel] + dl * nu
        M = _fine_for(grid, dl)
        g = curve_grid(grid.curve, M)
        wd = (g.weights * trig_resample(psi, M).T).T
        ker = kernel_matrices(k, X, g.x, nu, g.normal, which=("phi", "dny", "dnx", "d2"))
        for key, w in (("V", "phi"), ("W", "dny"), ("dV", "dnx"), ("dW", "d2")):
            vals[key].append(ker[w] @ wd)
    pinv = np.linalg.pinv(np.vander(deltas / dmax, degree + 1))
    limits = {key: np.tensordot(pinv, np.array(v), axes=(1, 0))[-1] for key, v in vals.items()}
    expected = {
        "V": 0.5 * ops.S @ psi,
        "W": 0.5 * (psi + ops.K @ psi),
        "dV": -0.5 * (psi - ops.Kp @ psi),
        "dW": 0.5 * ops.T @ psi,
    }
    return {key: float(np.abs(limits[key] - expected[key][sel]).max() / scale) for key in expected}


# ---------------------------------------------------------------------------
# volume potential


def newton_potential(region: RegionSpec, source, k, targets, order: int | None = None,
                     threshold: float | None = None, dim: int = 2):
    """int_region Phi_k(x, y) f(y) dy by tensor Gauss quadrature; targets must be outside."""
    k = _check_k(k)
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    thr = 0.05 * region.diameter if threshold is None else threshold
    dist = region.distance(X)
    if np.any(dist < thr) or np.any(region.contains(X)):
        raise NearFieldError(f"target within {dist.min():.3g} of region (threshold {thr:.3g})")
    nodes, w = region.quadrature(order)
    f = source(nodes) if callable(source) else np.asarray(source)
    if dim != 2:
        raise DomainError("newton_potential is implemented for dim = 2")
    return kernel_matrices(k, X, nodes)["phi"] @ (w * f)
