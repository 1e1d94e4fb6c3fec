"""Empirical check of the worst-case error: sample admissible data and noise, compare with sigma^2.

Each estimation regime is wrapped in an adapter exposing the same flat view:
a data perturbation vector with its ellipsoid weights, a forward map to
(l(phi), clean observations), and the noise weights.  A trial draws one data
perturbation and one noise direction zeta, then averages the squared error
over the antithetic pair y +- zeta.  For zero-mean noise this pair average is
exactly |data error|^2 + |noise error|^2, the quantity bounded by sigma^2.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as spla

from . import minimax_point as mp
from . import minimax_subdomain as ms
from . import minimax_surface as msf

SAMPLE_KINDS = ("random", "extremal_data", "extremal_noise")


class _Adapter:
    """Flat view of one regime; subclasses fill in the pieces."""

    sigma2: complex
    data_w: np.ndarray     # ellipsoid weights: sum data_w |delta|^2 <= 1
    noise_m: np.ndarray    # quadrature weights of the noise pairing
    noise_r2: np.ndarray   # noise weights r^2
    u_flat: np.ndarray     # optimal weights, flattened like the noise
    z_data: np.ndarray     # adjoint field on the data support (extremal direction up to scaling)

    def truth_and_obs(self, delta) -> tuple[complex, np.ndarray]:
        raise NotImplementedError

    def estimate(self, y_flat) -> complex:
        raise NotImplementedError

    def extremal_data(self) -> np.ndarray:
        d = self.z_data / self.data_w
        return d / np.sqrt(np.sum(self.data_w * np.abs(d) ** 2))

    def extremal_noise(self) -> np.ndarray:
        z = self.u_flat / self.noise_r2
        nrm = np.sqrt(np.sum(self.noise_m * self.noise_r2 * np.abs(z) ** 2))
        return z / nrm if nrm > 0 else z

    def random_data(self, rng) -> np.ndarray:
        v = rng.standard_normal(len(self.data_w)) + 1j * rng.standard_normal(len(self.data_w))
        return v / np.sqrt(np.sum(self.data_w * np.abs(v) ** 2))

    def random_noise(self, rng) -> np.ndarray:
        n = len(self.noise_m)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        return v / np.sqrt(np.sum(self.noise_m * self.noise_r2 * np.abs(v) ** 2))


class SubdomainAdapter(_Adapter):
    def __init__(self, setup: ms.SubdomainSetup, l0):
        self.setup, self.l0 = setup, l0
        d = setup.disc
        self.est = ms.solve_zp(setup, l0)
        self.sigma2 = self.est.sigma2
        self.n_vol = len(d.idx_Omega0)
        self.data_w = np.concatenate([d.m_Omega0 / d.q1m2, np.full(len(d.gamma_idx), d.gamma_w) / d.q2m2])
        self.noise_m = np.concatenate([o.m for o in d.obs])
        self.noise_r2 = np.concatenate([o.r2 for o in d.obs])
        self.u_flat = np.concatenate(self.est.u_hat)
        z = self.est.z.values.ravel()
        self.z_data = np.concatenate([d.m_Omega0 * z[d.idx_Omega0], d.gamma_w * z[d.gamma_idx]])
        self.f0 = ms.sample(setup.f0, d.points[d.idx_Omega0])
        self.g0 = ms.sample(setup.g0, d.gamma_points)
        self._sizes = np.cumsum([len(o.idx) for o in d.obs])[:-1]

    @cached_property
    def _lu(self):
        return spla.splu(self.setup.disc.op.A.tocsc())

    def truth_and_obs(self, delta):
        d = self.setup.disc
        f = self.f0 + delta[:self.n_vol]
        g = self.g0 + delta[self.n_vol:]
        b = d.volume_load(d.idx_Omega0, d.m_Omega0, f) + d.boundary_load(g)
        phi = self._lu.solve(b)
        return ms.functional(self.setup, self.l0, phi), np.concatenate(d.observe(phi))

    def estimate(self, y_flat):
        return ms.estimate_value(self.est, self.setup, np.split(y_flat, self._sizes))


class SurfaceAdapter(_Adapter):
    def __init__(self, setup: msf.SurfaceObservationSetup):
        self.setup = setup
        A = setup.asm
        self.sol = msf.solve_surface_system(setup)
        self.sigma2 = self.sol.sigma2
        self.data_w = A.wG / A.q1m2
        self.z_data = A.wG * self.sol.z_gamma
        self.noise_m = np.concatenate([np.concatenate([a["om"], a["om"]]) for a in A.arcs])
        self.noise_r2 = np.concatenate([np.concatenate([a["rsq"][1], a["rsq"][2]]) for a in A.arcs])
        self.u_flat = np.concatenate([np.concatenate(u) for u in self.sol.u_hat])
        self._M = [a["M"] for a in A.arcs]

    def truth_and_obs(self, delta):
        l, _, obs = msf.forward_observations(self.setup, self.setup.asm.h0 + delta)
        return l, np.concatenate([np.concatenate(o) for o in obs])

    def estimate(self, y_flat):
        y, off = [], 0
        for M in self._M:
            y.append((y_flat[off:off + M], y_flat[off + M:off + 2 * M]))
            off += 2 * M
        return msf.surface_estimate(self.sol, self.setup, y)


class PointAdapter(_Adapter):
    def __init__(self, setup: mp.PointObservationSetup, functional: mp.PointFunctional):
        self.setup, self.functional = setup, functional
        A = setup.asm
        self.sol = mp.solve_point_system(setup, functional)
        self.sigma2 = self.sol.sigma2
        self.data_w = A.wG / A.q1m2
        self.z_data = A.wG * self.sol.z_gamma
        self.noise_m = np.ones(len(A.r2))
        self.noise_r2 = A.r2
        self.u_flat = self.sol.u_hat

    def truth_and_obs(self, delta):
        at_obs, at_f = mp.forward_point_values(self.setup, self.setup.asm.h0 + delta, self.functional.points)
        return self.functional(at_f), at_obs

    def estimate(self, y_flat):
        return mp.point_estimate(self.sol, y_flat)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    sample_kind: str
    sq_error: float
    ratio_to_sigma2: float


@dataclass(frozen=True)
class MonteCarloStats:
    sigma2: float
    trials: list
    mean_sq_error: float
    mean_ratio: float
    max_ratio: float
    extremal_ratio: float | None

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "sample_kind", "sq_error", "ratio_to_sigma2"])
        for t in self.trials:
            w.writerow([t.trial, t.sample_kind, f"{t.sq_error:.17g}", f"{t.ratio_to_sigma2:.17g}"])
        return buf.getvalue()


def trial_kinds(trials: int, extremal_every: int = 10) -> list[str]:
    """Mostly random trials, with extremal_data and extremal_noise interleaved every `extremal_every`."""
    kinds = []
    for i in range(trials):
        if i % extremal_every == 0:
            kinds.append("extremal_data")
        elif i % extremal_every == extremal_every // 2:
            kinds.append("extremal_noise")
        else:
            kinds.append("random")
    return kinds


def monte_carlo(adapter: _Adapter, trials: int, seed: int = 0, amplitude: float = 1.0,
                kinds: list[str] | None = None) -> MonteCarloStats:
    """Empirical squared errors of the minimax estimate over admissible samples.

    `amplitude` scales both perturbations (1 is the ellipsoid boundary, 0 the
    nominal data without noise).
    """
    rng = np.random.default_rng(seed)
    kinds = trial_kinds(trials) if kinds is None else list(kinds)
    if len(kinds) != trials:
        raise ValueError("one sample kind per trial is required")
    s2 = float(adapter.sigma2.real)
    ext_d, ext_n = adapter.extremal_data(), adapter.extremal_noise()
    cache = {}
    out = []
    for i, kind in enumerate(kinds):
        if kind not in SAMPLE_KINDS:
            raise ValueError(f"unknown sample kind {kind!r}")
        # always draw, so trial i sees the same stream whatever the kinds are
        rd, rn = adapter.random_data(rng), adapter.random_noise(rng)
        delta = ext_d if kind == "extremal_data" else rd
        zeta = rn if kind == "random" else ext_n
        key = (kind == "extremal_data")
        if key and "ext" in cache:
            l_true, y0 = cache["ext"]
        else:
            l_true, y0 = adapter.truth_and_obs(amplitude * delta)
            if key:
                cache["ext"] = (l_true, y0)
        errs = [abs(l_true - adapter.estimate(y0 + sgn * amplitude * zeta)) ** 2 for sgn in (1.0, -1.0)]
        e = 0.5 * (errs[0] + errs[1])
        out.append(TrialRecord(i, kind, float(e), float(e / s2) if s2 > 0 else float("inf")))
    ratios = np.array([t.ratio_to_sigma2 for t in out])
    ext = [t.ratio_to_sigma2 for t in out if t.sample_kind == "extremal_data"]
    return MonteCarloStats(
        sigma2=s2, trials=out,
        mean_sq_error=float(np.mean([t.sq_error for t in out])) if out else 0.0,
        mean_ratio=float(ratios.mean()) if out else 0.0,
        max_ratio=float(ratios.max()) if out else 0.0,
        extremal_ratio=float(min(ext)) if ext else None)
