"""Scenario runner: read a YAML scenario, solve, and write report.json (plus trials.csv for Monte Carlo).

Scenario keys (see examples/configs for complete files):

    mode: forward | subdomain | surface | point | monte-carlo
    wavenumber: [re, im]
    geometry:      obstacle {kind, params, center} or annulus {a, R, n_r, n_theta, n_f}
    observation:   points / arcs / regions, optional values (measured data)
    uncertainty:   q1, q2, r, f0, g0, h0
    functional:    region + l0, or points + a
    solver:        n_boundary, eta, seed, trials, grid_multiplier, estimator, amplitude

Field values are numbers, [re, im] pairs, complex strings ("0.5-0.3j") or numpy
expressions in x, y, r, theta (surfaces: s) such as "sin(x) + 0.2j".
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import minimax_point as mp
from . import minimax_subdomain as ms
from . import minimax_surface as msf
from .errors import ConfigError, DomainError, MinimaxError, RegionViolation, SeparationViolation
from .forward import cfie_condition, radiation_residual, solve_exterior_neumann
from .geometry import AnnulusSpec, RegionSpec, arc_grid, curve_grid, default_nf, make_arc, make_curve
from .monte_carlo import PointAdapter, SubdomainAdapter, SurfaceAdapter, monte_carlo

MODES = ("forward", "subdomain", "surface", "point", "monte-carlo")
ESTIMATORS = ("subdomain", "surface", "point")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_NS = {name: getattr(np, name) for name in
       ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "arctan2", "sinh", "cosh", "tanh", "real", "imag",
        "conj", "ones_like", "zeros_like")}


# parsing helpers -----------------------------------------------------------

def _get(block: dict, key: str, where: str, default=...):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping")
    if key not in block:
        if default is ...:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    return block[key]


def parse_complex(v, where: str) -> complex:
    try:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, str):
            return complex(v.replace(" ", ""))
        return complex(float(v))
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read {v!r} as a complex number") from None


def _floats(v, where: str, n: int | None = None) -> list[float]:
    try:
        out = [float(t) for t in v]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a list of numbers, got {v!r}") from None
    if n is not None and len(out) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(out)}")
    return out


def _compile(expr: str, where: str, names: tuple[str, ...]):
    try:
        code = compile(expr, where, "eval")
    except SyntaxError as e:
        raise ConfigError(f"{where}: invalid expression {expr!r} ({e.msg})") from None
    bad = set(code.co_names) - set(_NS) - set(names) - {"taper"}
    if bad:
        raise ConfigError(f"{where}: unknown names {sorted(bad)} in {expr!r}")
    return code


def point_field(v, where: str, default=None):
    """Callable of points (n, 2) from a config value; None passes through as `default`."""
    if v is None:
        return default
    if isinstance(v, str):
        try:
            return parse_complex(v, where)
        except ConfigError:
            pass
        code = _compile(v, where, ("x", "y", "r", "theta"))

        def f(P, code=code):
            x, y = P[:, 0], P[:, 1]
            env = dict(_NS, x=x, y=y, r=np.hypot(x, y), theta=np.arctan2(y, x))
            return np.broadcast_to(np.asarray(eval(code, {"__builtins__": {}}, env), dtype=complex), (len(P),))
        return f
    return parse_complex(v, where)


def arc_field(v, where: str):
    """Callable of the arc parameter s from a config value."""
    if isinstance(v, str):
        try:
            c = parse_complex(v, where)
            return lambda s: np.full(len(s), c)
        except ConfigError:
            pass
        code = _compile(v, where, ("s",))

        def f(s, code=code):
            env = dict(_NS, s=s, taper=msf.endpoint_taper(s))
            return np.broadcast_to(np.asarray(eval(code, {"__builtins__": {}}, env), dtype=complex), (len(s),))
        return f
    c = parse_complex(v, where)
    return lambda s: np.full(len(s), c)


def _factor(exprs, where: str, maker):
    if not isinstance(exprs, list):
        exprs = [exprs]
    fs = [maker(e, f"{where}[{i}]") for i, e in enumerate(exprs)]

    def F(arg):
        cols = []
        for f in fs:
            v = f(arg) if callable(f) else np.full(len(arg), f)
            cols.append(np.asarray(v, dtype=complex))
        return np.stack(cols, 1)
    return F


def region(block, where: str) -> RegionSpec:
    kind = _get(block, "kind", where)
    params = _floats(_get(block, "params", where), f"{where}.params")
    try:
        return RegionSpec(kind, tuple(params))
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _scaled(n, mult: float, even: bool = False) -> int:
    m = max(1, int(round(int(n) * mult)))
    return m + (m % 2) if even else m


def obstacle_grid(cfg: dict, mult: float):
    g = _get(cfg, "geometry", "scenario")
    ob = _get(g, "obstacle", "geometry")
    try:
        curve = make_curve(_get(ob, "kind", "geometry.obstacle"),
                           _floats(_get(ob, "params", "geometry.obstacle"), "geometry.obstacle.params"),
                           tuple(_floats(ob.get("center", [0, 0]), "geometry.obstacle.center", 2)))
    except ValueError as e:
        raise ConfigError(f"geometry.obstacle: {e}") from None
    n = _scaled(_get(cfg.get("solver", {}), "n_boundary", "solver", 64), mult, even=True)
    return curve_grid(curve, n)


def build_subdomain(cfg: dict, mult: float):
    k = parse_complex(_get(cfg, "wavenumber", "scenario"), "wavenumber")
    ab = _get(_get(cfg, "geometry", "scenario"), "annulus", "geometry")
    a, R = float(_get(ab, "a", "geometry.annulus")), float(_get(ab, "R", "geometry.annulus"))
    n_r = _scaled(_get(ab, "n_r", "geometry.annulus"), mult)
    n_t = _scaled(_get(ab, "n_theta", "geometry.annulus"), mult, even=True)
    n_f = int(ab.get("n_f", default_nf(k, R)))
    try:
        ann = AnnulusSpec(a, R, n_r, n_t, min(n_f, (n_t - 1) // 2))
    except ValueError as e:
        raise ConfigError(f"geometry.annulus: {e}") from None
    unc = cfg.get("uncertainty", {}) or {}
    obs = []
    for i, ob in enumerate(_get(_get(cfg, "observation", "scenario"), "regions", "observation")):
        w = f"observation.regions[{i}]"
        obs.append(ms.SubdomainObservation(region(_get(ob, "region", w), f"{w}.region"),
                                           _factor(_get(ob, "a", w), f"{w}.a", point_field),
                                           _factor(_get(ob, "b", w), f"{w}.b", point_field),
                                           point_field(ob.get("r", 1.0), f"{w}.r")))
    fn = _get(cfg, "functional", "scenario")
    setup = ms.SubdomainSetup(ann, k, region(_get(fn, "region", "functional"), "functional.region"),
                              region(_get(unc, "Omega0", "uncertainty"), "uncertainty.Omega0"), tuple(obs),
                              q1=point_field(unc.get("q1", 1.0), "uncertainty.q1"),
                              q2=point_field(unc.get("q2", 1.0), "uncertainty.q2"),
                              f0=point_field(unc.get("f0"), "uncertainty.f0"),
                              g0=point_field(unc.get("g0"), "uncertainty.g0"))
    return setup, point_field(_get(fn, "l0", "functional", 1.0), "functional.l0")


def build_surface(cfg: dict, mult: float):
    k = parse_complex(_get(cfg, "wavenumber", "scenario"), "wavenumber")
    grid = obstacle_grid(cfg, mult)
    unc = cfg.get("uncertainty", {}) or {}
    arcs = []
    for i, ab in enumerate(_get(_get(cfg, "observation", "scenario"), "arcs", "observation")):
        w = f"observation.arcs[{i}]"
        try:
            arc = make_arc(_get(ab, "kind", w), tuple(_floats(_get(ab, "params", w), f"{w}.params")))
        except ValueError as e:
            raise ConfigError(f"{w}: {e}") from None
        kernels = {}
        for key, kv in (_get(ab, "kernels", w) or {}).items():
            rk = str(key)
            if rk not in ("11", "12", "21", "22"):
                raise ConfigError(f"{w}.kernels: key {key!r} must be one of 11, 12, 21, 22")
            kernels[(int(rk[0]), int(rk[1]))] = (_factor(_get(kv, "a", f"{w}.kernels.{rk}"), f"{w}.kernels.{rk}.a", arc_field),
                                                  _factor(_get(kv, "b", f"{w}.kernels.{rk}"), f"{w}.kernels.{rk}.b", arc_field))
        M = _scaled(ab.get("nodes", 16), mult)
        try:
            arcs.append(msf.ArcObservation(arc_grid(arc, M), kernels, arc_field(ab.get("r1", 1.0), f"{w}.r1"),
                                           arc_field(ab.get("r2", 1.0), f"{w}.r2")))
        except ValueError as e:
            raise ConfigError(f"{w}: {e}") from None
    fn = _get(cfg, "functional", "scenario")
    setup = msf.SurfaceObservationSetup(grid, k, tuple(arcs), region(_get(fn, "region", "functional"), "functional.region"),
                                        point_field(_get(fn, "l0", "functional", 1.0), "functional.l0"),
                                        q1=point_field(unc.get("q1", 1.0), "uncertainty.q1"),
                                        h0=point_field(unc.get("h0"), "uncertainty.h0"),
                                        eta=float(cfg.get("solver", {}).get("eta", 1.0)))
    return setup, None


def build_point(cfg: dict, mult: float):
    k = parse_complex(_get(cfg, "wavenumber", "scenario"), "wavenumber")
    grid = obstacle_grid(cfg, mult)
    unc = cfg.get("uncertainty", {}) or {}
    ob = _get(cfg, "observation", "scenario")
    pts = np.array([_floats(p, f"observation.points[{i}]", 2) for i, p in enumerate(_get(ob, "points", "observation"))])
    r = unc.get("r", 1.0)
    r = np.array(_floats(r, "uncertainty.r", len(pts))) if isinstance(r, list) else float(r)
    setup = mp.PointObservationSetup(grid, k, pts, r, q1=point_field(unc.get("q1", 1.0), "uncertainty.q1"),
                                     h0=point_field(unc.get("h0"), "uncertainty.h0"),
                                     eta=float(cfg.get("solver", {}).get("eta", 1.0)))
    fn = _get(cfg, "functional", "scenario")
    fpts = np.array([_floats(p, f"functional.points[{i}]", 2) for i, p in enumerate(_get(fn, "points", "functional"))])
    a = [parse_complex(v, f"functional.a[{i}]") for i, v in enumerate(_get(fn, "a", "functional"))]
    if len(a) != len(fpts):
        raise ConfigError("functional.a: one coefficient per functional point is required")
    return setup, mp.PointFunctional(fpts, a)


BUILDERS = {"subdomain": build_subdomain, "surface": build_surface, "point": build_point}


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML error in {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    mode = _get(cfg, "mode", "scenario")
    if mode not in MODES:
        raise ConfigError(f"mode: {mode!r} is not one of {MODES}")
    k = parse_complex(_get(cfg, "wavenumber", "scenario"), "wavenumber")
    if k == 0 or k.imag < 0:
        raise ConfigError(f"wavenumber: need k != 0 and Im k >= 0, got {k}")
    return cfg


# running -------------------------------------------------------------------

def _cplx(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _observations(cfg, kind, setup, fn, adapter):
    """Measured data from the config if present, else noise-free data at the nominal h0/f0/g0."""
    vals = (cfg.get("observation") or {}).get("values")
    if vals is None:
        l_nom, y = adapter.truth_and_obs(np.zeros(len(adapter.data_w), complex))
        return y, complex(l_nom)
    y = np.array([parse_complex(v, f"observation.values[{i}]") for i, v in enumerate(vals)])
    if y.shape != adapter.u_flat.shape:
        raise ConfigError(f"observation.values: expected {adapter.u_flat.shape[0]} values, got {len(y)}")
    return y, None


def make_adapter(kind: str, setup, fn):
    if kind == "subdomain":
        return SubdomainAdapter(setup, fn)
    if kind == "surface":
        return SurfaceAdapter(setup)
    return PointAdapter(setup, fn)


def _estimation(cfg, kind, mult):
    setup, fn = BUILDERS[kind](cfg, mult)
    adapter = make_adapter(kind, setup, fn)
    y, l_nom = _observations(cfg, kind, setup, fn, adapter)
    est = adapter.estimate(y)
    s2 = complex(adapter.sigma2)
    if kind == "subdomain":
        cost = ms.worst_case_cost(setup, fn, adapter.est.u_hat)
        cond = None
    elif kind == "surface":
        cost = msf.worst_case_cost(setup, adapter.sol.u_hat)
        cond = adapter.sol.cond
    else:
        cost = mp.worst_case_cost_point(setup, fn, adapter.sol.u_hat)
        cond = adapter.sol.cond
    rep = {"estimator": kind, "sigma": float(np.sqrt(max(s2.real, 0.0))), "sigma2": _cplx(s2),
           "estimate": _cplx(est), "condition_number": cond,
           "diagnostics": {"identity_residual": abs(cost - s2.real) / max(abs(s2), 1e-300),
                           "imag_sigma2": abs(s2.imag)}}
    if l_nom is not None:
        rep["nominal_value"] = _cplx(l_nom)
    return rep, adapter


def _forward(cfg, mult):
    k = parse_complex(cfg["wavenumber"], "wavenumber")
    grid = obstacle_grid(cfg, mult)
    eta = float(cfg.get("solver", {}).get("eta", 1.0))
    h = point_field((cfg.get("uncertainty") or {}).get("h0"), "uncertainty.h0", default=1.0)
    hv = h(grid.x) if callable(h) else np.full(grid.n, complex(h))
    sol = solve_exterior_neumann(grid, k, hv, eta)
    pts = (cfg.get("observation") or {}).get("points") or []
    P = np.array([_floats(p, f"observation.points[{i}]", 2) for i, p in enumerate(pts)]).reshape(-1, 2)
    vals = sol.evaluate(P) if len(P) else np.zeros(0, complex)
    rad = 2.0 * float(np.max(np.linalg.norm(grid.x, axis=1)))
    return {"condition_number": sol.cond, "cfie_condition_eta0": cfie_condition(grid, k, 0.0) if k.real > 0 else None,
            "values": [_cplx(v) for v in vals],
            "diagnostics": {"radiation_residual": radiation_residual(sol.evaluate, k, rad)}}


def run(cfg: dict, out_dir, command: str = "run", seed=None, trials=None, grid_multiplier=None) -> dict:
    """Execute a scenario and write report.json (and trials.csv for Monte Carlo) into out_dir."""
    t0 = time.perf_counter()
    solver = cfg.get("solver", {}) or {}
    mult = float(grid_multiplier if grid_multiplier is not None else solver.get("grid_multiplier", 1.0))
    if mult <= 0:
        raise ConfigError("solver.grid_multiplier must be positive")
    mode = cfg["mode"]
    do_mc = command == "monte-carlo" or mode == "monte-carlo"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"scenario": cfg, "mode": mode, "grid_multiplier": mult}
    if mode == "forward":
        if do_mc:
            raise ConfigError("monte-carlo needs an estimation mode (subdomain, surface, point)")
        report.update(_forward(cfg, mult))
    else:
        kind = mode if mode in ESTIMATORS else solver.get("estimator")
        if kind not in ESTIMATORS:
            raise ConfigError(f"solver.estimator: must be one of {ESTIMATORS} for monte-carlo mode")
        rep, adapter = _estimation(cfg, kind, mult)
        report.update(rep)
        if do_mc:
            n = int(trials if trials is not None else solver.get("trials", 100))
            sd = int(seed if seed is not None else solver.get("seed", 0))
            if n < 0:
                raise ConfigError("trial count must be non-negative")
            stats = monte_carlo(adapter, n, seed=sd, amplitude=float(solver.get("amplitude", 1.0)))
            (out / "trials.csv").write_text(stats.csv_text())
            report["monte_carlo"] = {"trials": n, "seed": sd, "mean_sq_error": stats.mean_sq_error,
                                     "mean_ratio": stats.mean_ratio, "max_ratio": stats.max_ratio,
                                     "extremal_ratio": stats.extremal_ratio,
                                     "table": [t.__dict__ for t in stats.trials]}
    report["timing_s"] = time.perf_counter() - t0
    (out / "report.json").write_text(json.dumps(report, indent=2, default=str))
    return report


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="minimax-helmholtz", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "monte-carlo"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="scenario YAML file")
        sp.add_argument("-o", "--output", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, default=None, help="override solver.seed")
        sp.add_argument("--trials", type=int, default=None, help="override solver.trials")
        sp.add_argument("--grid-multiplier", type=float, default=None, help="scale all grid sizes")
    args = p.parse_args(argv)
    try:
        cfg = load_config(args.config)
        rep = run(cfg, args.output, args.command, args.seed, args.trials, args.grid_multiplier)
    except (ConfigError, SeparationViolation, RegionViolation, DomainError) as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MinimaxError as e:
        print(f"numeric failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"config error: ValueError: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if "sigma" in rep:
        print(f"sigma = {rep['sigma']:.10g}  estimate = {complex(*rep['estimate']):.10g}")
    print(f"wrote {Path(args.output) / 'report.json'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
