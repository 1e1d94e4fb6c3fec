"""Closed obstacle curves, open observation arcs, regions and their quadrature grids."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import SeparationViolation

CURVE_KINDS = ("circle", "ellipse", "kite")


@dataclass(frozen=True)
class ClosedCurve:
    """Analytic 2*pi-periodic counterclockwise parametrization of a closed curve."""

    kind: str
    params: tuple
    center: tuple = (0.0, 0.0)

    def _derivs(self, t):
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        if self.kind == "circle":
            (a,) = self.params
            x = np.stack([a * c, a * s], -1)
            d1 = np.stack([-a * s, a * c], -1)
            d2 = np.stack([-a * c, -a * s], -1)
        elif self.kind == "ellipse":
            a, b = self.params
            x = np.stack([a * c, b * s], -1)
            d1 = np.stack([-a * s, b * c], -1)
            d2 = np.stack([-a * c, -b * s], -1)
        else:
            # standard non-convex kite, uniformly scaled
            (sc,) = self.params
            c2, s2 = np.cos(2 * t), np.sin(2 * t)
            x = sc * np.stack([c + 0.65 * c2 - 0.65, 1.5 * s], -1)
            d1 = sc * np.stack([-s - 1.3 * s2, 1.5 * c], -1)
            d2 = sc * np.stack([-c - 2.6 * c2, -1.5 * s], -1)
        return x + np.asarray(self.center), d1, d2

    def point(self, t):
        return self._derivs(t)[0]

    def tangent(self, t):
        return self._derivs(t)[1]

    def normal(self, t):
        """Outward unit normal (pointing away from the enclosed obstacle)."""
        d1 = self.tangent(t)
        n = np.stack([d1[..., 1], -d1[..., 0]], -1)
        return n / np.linalg.norm(d1, axis=-1)[..., None]

    def curvature(self, t):
        _, d1, d2 = self._derivs(t)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3


def winding_number(curve: ClosedCurve, points, n: int = 2048) -> np.ndarray:
    """Winding number of the curve around each point (1 inside, 0 outside)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    poly = curve.point(2 * np.pi * np.arange(n + 1) / n)
    ang = np.arctan2(poly[None, :, 1] - P[:, None, 1], poly[None, :, 0] - P[:, None, 0])
    dang = np.diff(ang, axis=1)
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    return np.rint(dang.sum(1) / (2 * np.pi)).astype(int)


def make_curve(kind: str, params: Sequence[float], center=(0.0, 0.0)) -> ClosedCurve:
    """Build a circle (radius), ellipse (semi-axes a, b) or kite (scale)."""
    if kind not in CURVE_KINDS:
        raise ValueError(f"unknown curve kind {kind!r}; choose from {CURVE_KINDS}")
    params = tuple(float(p) for p in np.atleast_1d(params))
    expected = {"circle": 1, "ellipse": 2, "kite": 1}[kind]
    if len(params) != expected:
        raise ValueError(f"{kind} takes {expected} parameter(s), got {len(params)}")
    if any(p <= 0 for p in params):
        raise ValueError(f"curve parameters must be positive, got {params}")
    return ClosedCurve(kind, params, tuple(float(c) for c in center))


@dataclass(frozen=True, eq=False)
class ClosedCurveGrid:
    curve: ClosedCurve
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    ddx: np.ndarray
    speed: np.ndarray
    normal: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def nodes(self) -> np.ndarray:
        return self.x


def curve_grid(curve: ClosedCurve, N: int) -> ClosedCurveGrid:
    """Equispaced trapezoid grid t_j = 2*pi*j/N with weights 2*pi/N * |x'(t_j)|."""
    if int(N) != N or N < 8 or N % 2:
        raise ValueError(f"N must be an even integer >= 8, got {N}")
    N = int(N)
    t = 2 * np.pi * np.arange(N) / N
    x, d1, d2 = curve._derivs(t)
    speed = np.linalg.norm(d1, axis=1)
    normal = np.stack([d1[:, 1], -d1[:, 0]], 1) / speed[:, None]
    return ClosedCurveGrid(curve, t, x, d1, d2, speed, normal, 2 * np.pi / N * speed)


@dataclass(frozen=True)
class OpenArc:
    """Open arc y(s), s in [-1, 1]: a straight segment or a circular arc.

    The unit normal is the tangent rotated clockwise by 90 degrees, so a
    counterclockwise circular arc has the radially outward normal.
    """

    kind: str
    params: tuple

    def _derivs(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "segment":
            p0 = np.asarray(self.params[:2])
            p1 = np.asarray(self.params[2:4])
            y = 0.5 * (p0 + p1) + 0.5 * s[:, None] * (p1 - p0)
            dy = np.broadcast_to(0.5 * (p1 - p0), y.shape).copy()
        else:
            cx, cy, rad, th0, th1 = self.params
            th = 0.5 * (th0 + th1) + 0.5 * s * (th1 - th0)
            dth = 0.5 * (th1 - th0)
            y = np.stack([cx + rad * np.cos(th), cy + rad * np.sin(th)], 1)
            dy = np.stack([-rad * np.sin(th) * dth, rad * np.cos(th) * dth], 1)
        return y, dy

    def point(self, s):
        return self._derivs(np.atleast_1d(s))[0]

    def normal(self, s):
        _, dy = self._derivs(np.atleast_1d(s))
        n = np.stack([dy[:, 1], -dy[:, 0]], 1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def endpoints(self) -> np.ndarray:
        return self.point(np.array([-1.0, 1.0]))


def make_arc(kind: str, params: Sequence[float]) -> OpenArc:
    """segment: (x0, y0, x1, y1); circular: (cx, cy, radius, theta0, theta1)."""
    params = tuple(float(p) for p in params)
    if kind == "segment":
        if len(params) != 4:
            raise ValueError("segment takes (x0, y0, x1, y1)")
        if params[:2] == params[2:]:
            raise ValueError("segment endpoints coincide")
    elif kind == "circular":
        if len(params) != 5:
            raise ValueError("circular arc takes (cx, cy, radius, theta0, theta1)")
        if params[2] <= 0 or params[3] == params[4] or abs(params[4] - params[3]) >= 2 * np.pi:
            raise ValueError(f"invalid circular arc parameters {params}")
    else:
        raise ValueError(f"unknown arc kind {kind!r}")
    return OpenArc(kind, params)


@dataclass(frozen=True, eq=False)
class OpenArcGrid:
    arc: OpenArc
    s: np.ndarray
    x: np.ndarray
    normal: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.s)

    @property
    def nodes(self) -> np.ndarray:
        return self.x


def arc_grid(arc: OpenArc, M: int) -> OpenArcGrid:
    """Gauss-Legendre nodes mapped to the arc; weights include |y'(s_j)|."""
    if int(M) != M or M < 4:
        raise ValueError(f"M must be an integer >= 4, got {M}")
    s, w = np.polynomial.legendre.leggauss(int(M))
    y, dy = arc._derivs(s)
    speed = np.linalg.norm(dy, axis=1)
    return OpenArcGrid(arc, s, y, arc.normal(s), w * speed)


@dataclass(frozen=True)
class RegionSpec:
    """Disk (cx, cy, radius) or axis-aligned rectangle (x0, y0, x1, y1) with tensor Gauss quadrature."""

    kind: str
    params: tuple
    order: int = 16

    def __post_init__(self):
        if self.kind not in ("disk", "rectangle"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind == "disk" and (len(self.params) != 3 or self.params[2] <= 0):
            raise ValueError("disk region takes (cx, cy, radius > 0)")
        if self.kind == "rectangle" and (
            len(self.params) != 4 or self.params[2] <= self.params[0] or self.params[3] <= self.params[1]
        ):
            raise ValueError("rectangle region takes (x0, y0, x1, y1) with x1 > x0, y1 > y0")
        if self.order < 2:
            raise ValueError("quadrature order must be >= 2")

    def quadrature(self, order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Nodes (n, 2) and weights (n,) of the tensor rule."""
        q = int(order or self.order)
        g, gw = np.polynomial.legendre.leggauss(q)
        if self.kind == "rectangle":
            x0, y0, x1, y1 = self.params
            xs = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * g
            ys = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * g
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            W = np.outer(gw, gw) * 0.25 * (x1 - x0) * (y1 - y0)
            return np.stack([X.ravel(), Y.ravel()], 1), W.ravel()
        cx, cy, rad = self.params
        r = 0.5 * rad * (g + 1)
        wr = 0.5 * rad * gw * r
        nth = 2 * q
        th = 2 * np.pi * np.arange(nth) / nth
        R, TH = np.meshgrid(r, th, indexing="ij")
        W = np.outer(wr, np.full(nth, 2 * np.pi / nth))
        return np.stack([cx + (R * np.cos(TH)).ravel(), cy + (R * np.sin(TH)).ravel()], 1), W.ravel()

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        if self.kind == "disk":
            cx, cy, rad = self.params
            return np.hypot(p[:, 0] - cx, p[:, 1] - cy) <= rad
        x0, y0, x1, y1 = self.params
        return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)

    def distance(self, points) -> np.ndarray:
        """Distance from each point to the closed region (0 inside)."""
        p = np.atleast_2d(points)
        if self.kind == "disk":
            cx, cy, rad = self.params
            return np.maximum(np.hypot(p[:, 0] - cx, p[:, 1] - cy) - rad, 0.0)
        x0, y0, x1, y1 = self.params
        dx = np.maximum(np.maximum(x0 - p[:, 0], p[:, 0] - x1), 0.0)
        dy = np.maximum(np.maximum(y0 - p[:, 1], p[:, 1] - y1), 0.0)
        return np.hypot(dx, dy)

    @property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2 * self.params[2]
        x0, y0, x1, y1 = self.params
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def nodes(self) -> np.ndarray:
        return self.quadrature()[0]


@dataclass(frozen=True)
class AnnulusSpec:
    """Polar grid on a <= r <= R: n_r radial intervals, n_theta angular nodes, n_f Fourier modes."""

    a: float
    R: float
    n_r: int
    n_theta: int
    n_f: int

    def __post_init__(self):
        if not 0 < self.a < self.R:
            raise ValueError(f"need 0 < a < R, got a={self.a}, R={self.R}")
        if self.n_r < 2:
            raise ValueError("n_r must be >= 2")
        if self.n_theta < 2 * self.n_f + 1:
            raise ValueError("n_theta must be >= 2 n_f + 1")

    @property
    def r(self) -> np.ndarray:
        return np.linspace(self.a, self.R, self.n_r + 1)

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    def points(self) -> np.ndarray:
        """Grid points ordered radius-major, shape ((n_r+1) n_theta, 2)."""
        R, TH = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], 1)


def default_nf(k: complex, R: float) -> int:
    """Fourier truncation max(16, ceil(1.5 |k| R) + 10)."""
    return max(16, math.ceil(1.5 * abs(k) * R) + 10)


def _object_samples(obj, n: int = 512) -> np.ndarray:
    """Dense points on an object (grids are replaced by their exact geometry)."""
    if isinstance(obj, ClosedCurveGrid):
        obj = obj.curve
    if isinstance(obj, OpenArcGrid):
        obj = obj.arc
    if isinstance(obj, ClosedCurve):
        return obj.point(2 * np.pi * np.arange(n) / n)
    if isinstance(obj, OpenArc):
        return obj.point(np.linspace(-1, 1, n + 1))
    if isinstance(obj, RegionSpec):
        if obj.kind == "disk":
            cx, cy, rad = obj.params
            th = 2 * np.pi * np.arange(n) / n
            return np.stack([cx + rad * np.cos(th), cy + rad * np.sin(th)], 1)
        x0, y0, x1, y1 = obj.params
        u = np.linspace(0, 1, n // 4, endpoint=False)
        return np.concatenate([np.stack([x0 + (x1 - x0) * u, np.full_like(u, y0)], 1),
                               np.stack([np.full_like(u, x1), y0 + (y1 - y0) * u], 1),
                               np.stack([x1 - (x1 - x0) * u, np.full_like(u, y1)], 1),
                               np.stack([np.full_like(u, x0), y1 - (y1 - y0) * u], 1)])
    return np.atleast_2d(np.asarray(obj, dtype=float))


def _diameter(nodes: np.ndarray) -> float:
    if len(nodes) < 2:
        return 0.0
    return float(cdist(nodes, nodes).max())


def _pair_distance(a, b, sa, sb) -> float:
    if isinstance(a, RegionSpec):
        return float(a.distance(sb).min())
    if isinstance(b, RegionSpec):
        return float(b.distance(sa).min())
    return float(cdist(sa, sb).min())


def min_separation(objects: Sequence, threshold: float | None = None, factor: float = 0.05) -> float:
    """Minimum distance between distinct objects (curves, arcs, regions, point sets).

    Curves and arcs are sampled densely from their exact geometry, so crossing
    arcs are caught even when their quadrature nodes stay apart; distances to
    regions are exact.  Raises SeparationViolation below `threshold`, which
    defaults to `factor` times the shortest object diameter (single points do
    not count toward that diameter).
    """
    samples = [_object_samples(o) for o in objects]
    if len(samples) < 2:
        return math.inf
    if threshold is None:
        diams = [_diameter(n) for n in samples]
        diams = [d for d in diams if d > 0]
        threshold = factor * min(diams) if diams else 0.0
    best = math.inf
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            best = min(best, _pair_distance(objects[i], objects[j], samples[i], samples[j]))
    if best < threshold:
        raise SeparationViolation(f"objects are {best:.3g} apart, below threshold {threshold:.3g}")
    return best
