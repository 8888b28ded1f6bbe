"""Scenario runner: ``heatball-lab <scenario> [--config FILE] [--set k=v]...``.

Each scenario evaluates a set of named checks and writes them as CSV
(``scenario,check,computed,expected,tolerance,pass``) or JSON. Density
curves go to a separate ``<scenario>_curve.csv``.

Exit codes: 0 all checks pass, 1 some check failed, 2 bad configuration or
out-of-domain request, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from . import estimates as E
from . import heatball as H
from . import kernels as K
from . import models as M
from . import reduced_geometry as RG
from .numerics import NumericError, extrapolate_to_zero, integrate_adaptive

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
CSV_COLUMNS = ["scenario", "check", "computed", "expected", "tolerance", "pass"]
CURVE_COLUMNS = ["r", "P", "P_over_rn"]


class ConfigError(ValueError):
    pass


@dataclass
class Check:
    name: str
    computed: float
    expected: float
    tolerance: float
    passed: bool = False

    def __post_init__(self):
        self.computed = float(self.computed)
        self.expected = float(self.expected)
        self.tolerance = float(self.tolerance)
        self.passed = bool(abs(self.computed - self.expected) <= self.tolerance)


@dataclass
class ScenarioReport:
    scenario: str
    checks: list = field(default_factory=list)
    curve: list = field(default_factory=list)
    error: str = ""
    wall_time: float = 0.0

    def add(self, name, computed, expected, tolerance):
        self.checks.append(Check(name, computed, expected, tolerance))

    def audit(self, name, report: E.BoundReport):
        # audits pass on a zero violation count
        self.add(name, report.violations, 0, 0)

    @property
    def violations(self) -> int:
        return sum(not c.passed for c in self.checks)

    @property
    def passed(self) -> bool:
        return not self.error and all(c.passed for c in self.checks)


# -- configuration ---------------------------------------------------------------

DEFAULTS: dict[str, Any] = {
    "model": "euclidean",
    "n": 2,
    "radius": 1.0,
    "offset": 0.0,
    "horizon": 1.0,
    "kernel": "default",
    "k": 0,
    "phi": "constant",
    "phi_value": 1.0,
    "phi_coeffs": [1.0],
    "center": [],
    "r_grid": [0.5, 1.0],
    "tol": 1e-6,
}

SCENARIOS: dict[str, tuple[str, dict]] = {
    "mvp": ("mean value of a test function over heat balls, and its r -> 0 limit",
            {"phi": "linear", "phi_coeffs": [1.0, 0.0], "center": [0.3, 0.0],
             "r_grid": [0.25, 0.5, 0.75, 1.0]}),
    "heat-sphere": ("weighted mean over heat spheres, with the explicit flat weight",
                    {"r_grid": [0.5, 1.0], "samples": 100}),
    "reduced-volume": ("reduced volume of each time slice",
                       {"model": "gaussian_soliton", "tau_grid": [0.1, 0.5, 1.0], "tol": 1e-6}),
    "soliton-density": ("P/r^n is constant on shrinking solitons",
                        {"model": "shrinking_sphere", "offset": 0.0, "kernel": "reduced",
                         "r_grid": [0.2, 0.4, 0.8], "tol": 1e-4}),
    "monotonicity": ("P/r^n is nonincreasing and tends to 1 as r -> 0",
                     {"model": "shrinking_sphere", "offset": 0.1, "kernel": "reduced",
                      "r_grid": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
                      "quad_tol": 1e-5, "tol": 1e-3}),
    "identity-residual": ("radial derivative identity for P/r^n, integrated between two radii",
                          {"phi": "square", "r0": 0.5, "r1": 1.0, "tol": 1e-5}),
    "entropy": ("level-set energy integral of a fundamental solution",
                {"model": "gaussian_soliton", "kernel": "euclidean", "fbar_grid": [-2.0, -1.0, 0.0]}),
    "ni-mvi": ("transplanted comparison kernel mean and its domination",
               {"model": "sphere", "k": 0, "r_grid": [0.1, 0.3, 1.0]}),
    "bounds": ("reduced-distance bounds, heat-ball containment and geodesic speed envelopes",
               {"model": "gaussian_soliton", "points": 50, "slices": 100}),
    "gradient-estimate": ("fitted gradient-estimate constants and their grid stability",
                          {"shift": 0.1, "rho": 1.0, "grid": 24}),
    "sphere-kernel": ("sphere heat kernel: series vs images, mass and equation residual",
                      {"model": "sphere", "kernel": "sphere",
                       "d_grid": [0.0, 0.5, 1.5, 3.0], "tau_grid": [0.05, 0.3, 0.6, 2.0],
                       "overlap_tau": 0.2, "tol": 1e-8}),
}


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(scenario: str, path: str | None, overrides: list[str]) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(SCENARIOS[scenario][1])
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        data.pop("scenario", None)
        cfg.update(data)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg[key.strip()] = _parse_value(value.strip())
    unknown = sorted(set(cfg) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return cfg


_KNOWN_KEYS = set(DEFAULTS) | {k for _, d in SCENARIOS.values() for k in d} | {"expected"}


def _num(cfg, key, kind=float):
    try:
        return kind(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {cfg[key]!r}") from exc


def _floats(cfg, key):
    val = cfg[key]
    if not isinstance(val, list):
        raise ConfigError(f"{key}: expected a list of numbers")
    try:
        return [float(v) for v in val]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected a list of numbers") from exc


def build_model(cfg) -> M.ModelSpacetime:
    kind = cfg["model"]
    n, hz = _num(cfg, "n", int), _num(cfg, "horizon")
    if kind == "euclidean":
        return M.euclidean(n, hz)
    if kind == "gaussian_soliton":
        return M.gaussian_soliton(n, hz)
    if kind == "sphere":
        return M.sphere(n, _num(cfg, "radius"), hz)
    if kind == "hyperbolic3":
        return M.hyperbolic3(hz)
    if kind == "shrinking_sphere":
        return M.shrinking_sphere(n, _num(cfg, "offset"), hz)
    raise ConfigError(f"model: unknown kind {kind!r}")


def build_kernel(cfg, m) -> K.KernelField:
    name = cfg["kernel"]
    factories: dict[str, Callable] = {
        "default": K.default_field,
        "euclidean": K.euclidean_field,
        "sphere": K.sphere_field,
        "hyperbolic3": K.hyperbolic3_field,
        "reduced": K.reduced_volume_field,
        "transplant": lambda mm: K.transplant_field(mm, _num(cfg, "k", int)),
    }
    if name not in factories:
        raise ConfigError(f"kernel: unknown kernel {name!r}")
    return factories[name](m)


def build_phi(cfg, m) -> H.TestFunction:
    name = cfg["phi"]
    center = _floats(cfg, "center") or None
    if center is not None and len(center) != m.n:
        raise ConfigError(f"center: needs {m.n} coordinates")
    if name == "constant":
        return H.constant(_num(cfg, "phi_value"))
    if name == "linear":
        a = _floats(cfg, "phi_coeffs")
        if len(a) != m.n:
            raise ConfigError(f"phi_coeffs: needs {m.n} coefficients")
        return H.coordinate_linear(a, 0.0, center)
    if name == "caloric":
        return H.quadratic(m.n, center)
    if name == "square":
        return H.quadratic(m.n, center, time_coeff=0.0)
    raise ConfigError(f"phi: unknown test function {name!r}")


# -- scenarios -------------------------------------------------------------------

def _curve(rep, kf, rs, phi=None, rel_tol=1e-11):
    curve = H.density_curve(kf, rs, phi, rel_tol=rel_tol)
    rep.curve = [(r, p, q) for r, p, q in curve]
    return curve


def run_mvp(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m)
    phi = build_phi(cfg, m)
    tol = _num(cfg, "tol")
    target = phi.center_value
    scale = max(1.0, abs(target))
    curve = _curve(rep, kf, _floats(cfg, "r_grid"), phi)
    for r, _, q in curve:
        rep.add(f"P_over_rn r={r:g}", q, target, tol * scale)
    if len(curve) >= 3:
        lim = extrapolate_to_zero([(r, q) for r, _, q in curve], min(2, len(curve) - 2))
        rep.add("density_limit", lim.value, target, tol * scale)


def run_heat_sphere(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m)
    phi = build_phi(cfg, m)
    tol = _num(cfg, "tol")
    for r in _floats(cfg, "r_grid"):
        val = H.heat_sphere_mean(kf, r, phi)
        rep.add(f"heat_sphere_mean r={r:g}", val, phi.center_value, tol * max(1.0, abs(phi.center_value)))
    if m.kind is M.Kind.EUCLIDEAN and kf.label == "euclidean":
        r = _floats(cfg, "r_grid")[0]
        hb = H.build_heatball(kf, r)
        d, tau = hb.boundary_points(_num(cfg, "samples", int))
        w = H.heat_sphere_weight(kf, d, tau)
        ref = H.fulks_weight(m.n, r, d, tau)
        err = float(np.max(np.abs(w - ref) / np.maximum(np.abs(ref), 1e-300)))
        rep.add("explicit_weight_max_rel_diff", err, 0.0, 1e-10)


def run_reduced_volume(cfg, rep):
    m = build_model(cfg)
    tol = _num(cfg, "tol")
    taus = _floats(cfg, "tau_grid")
    vals = [RG.reduced_volume(m, t) for t in taus]
    try:
        const = RG.soliton_reduced_volume(m)
    except M.DomainError:
        const = None
    for t, v in zip(taus, vals):
        if const is not None:
            rep.add(f"reduced_volume tau={t:g}", v, const, tol)
        else:
            rep.add(f"reduced_volume_excess tau={t:g}", max(v - 1.0, 0.0), 0.0, tol)
    order = np.argsort(taus)
    ups = sum(vals[j] > vals[i] + tol for i, j in zip(order[:-1], order[1:]))
    rep.add("increase_count", ups, 0, 0)


def run_soliton_density(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m)
    const = RG.soliton_reduced_volume(m)
    tol = _num(cfg, "tol")
    for r, _, q in _curve(rep, kf, _floats(cfg, "r_grid")):
        rep.add(f"P_over_rn r={r:g}", q, const, tol)
    if "expected" in cfg:
        rep.add("soliton_constant", const, _num(cfg, "expected"), tol)


def run_monotonicity(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m)
    rs = sorted(_floats(cfg, "r_grid"))
    qt = _num(cfg, "quad_tol")
    curve = _curve(rep, kf, rs)
    qs = [q for _, _, q in curve]
    bad = sum(qs[j] > qs[i] + qt for i in range(len(qs)) for j in range(i + 1, len(qs)))
    rep.add("pairwise_increase_count", bad, 0, 0)
    small = [(r, q) for r, _, q in curve[: max(3, len(curve) // 2)]]
    lim = extrapolate_to_zero(small, 2)
    rep.add("density_limit", lim.value, 1.0, _num(cfg, "tol"))


def run_identity(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m)
    phi = build_phi(cfg, m)
    res = H.main_identity_residual(kf, phi, _num(cfg, "r0"), _num(cfg, "r1"))
    rep.add("lhs_minus_rhs", res.residual, 0.0, _num(cfg, "tol") * max(1.0, abs(res.lhs)))
    if "expected" in cfg:
        rep.add("lhs", res.lhs, _num(cfg, "expected"), _num(cfg, "tol") * max(1.0, abs(res.lhs)))


def run_entropy(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m)
    for fb in _floats(cfg, "fbar_grid"):
        rep.add(f"level_integral fbar={fb:g}", H.entropy_level_integral(kf, fb), 1.0, _num(cfg, "tol"))


def _space_form(m, k):
    if k == 0:
        return m.kind in (M.Kind.EUCLIDEAN, M.Kind.GAUSSIAN_SOLITON)
    if k == -1:
        return m.kind is M.Kind.HYPERBOLIC3
    return m.kind is M.Kind.SPHERE and m.radius == 1.0


def run_transplant_mean(cfg, rep):
    m = build_model(cfg)
    k = _num(cfg, "k", int)
    tol = _num(cfg, "tol")
    rs = sorted(_floats(cfg, "r_grid"))
    vals = [H.transplant_mean_ratio(m, k, r, tol=tol)[0] for r in rs]
    exact = _space_form(m, k)
    for r, v in zip(rs, vals):
        if exact:
            rep.add(f"mean_ratio r={r:g}", v, 1.0, tol)
        else:
            rep.add(f"mean_ratio_excess r={r:g}", max(v - 1.0, 0.0), 0.0, tol)
    ups = sum(b > a + tol for a, b in zip(vals[:-1], vals[1:]))
    rep.add("increase_count", ups, 0, 0)
    if m.kind is not M.Kind.SHRINKING_SPHERE and not exact:
        rep.add("transplant_above_kernel_count", domination_violations(m, k, upper=False), 0, 0)


def domination_violations(m: M.ModelSpacetime, k: int, upper: bool, nd: int = 40, nt: int = 40,
                          tol: float = 1e-12) -> int:
    """Grid count where the transplanted kernel is on the wrong side of the true kernel.

    ``upper=True`` counts points with transplant < kernel (the transplant
    claimed as an upper bound); ``upper=False`` counts transplant > kernel.
    """
    true = K.default_field(m)
    tr = K.transplant_field(m, k)
    tau = m.horizon * np.geomspace(1e-3, 1.0, nt)
    dmax = min(float(M.max_distance(m)), 6.0 * math.sqrt(m.horizon))
    d = np.linspace(0.0, dmax, nd)
    D, T = np.meshgrid(d, tau, indexing="ij")
    a = tr.psi(D, T)
    b = true.psi(D, T)
    gap = (b - a) if upper else (a - b)
    return int(np.count_nonzero(gap > tol * np.maximum(1.0, np.abs(b))))


def run_bounds(cfg, rep):
    m = build_model(cfg)
    smooth = not (m.kind is M.Kind.SHRINKING_SPHERE and m.offset == 0.0)
    if smooth:
        rep.audit("ell_bounds_violations", E.audit_ell_bounds(m, _num(cfg, "points", int)))
    k, _ = M.ricci_bounds(m, 0.0, m.horizon)
    c = E.containment_constant(k, m.horizon)
    rmax = math.sqrt(min(m.horizon / c, 4 * math.pi))
    for frac in (0.1, 0.3, 1.0):
        rep.audit(f"containment_violations r={frac:g}*rmax",
                  E.check_containment(m, frac * rmax, slices=_num(cfg, "slices", int)))
    if smooth:
        targets = [(0.1, 0.1), (0.5, 0.5), (1.0, 1.0)]
        rep.audit("speed_envelope_violations", E.audit_speed_envelopes(m, targets))


def run_gradient(cfg, rep):
    m = build_model(cfg)
    kf = build_kernel(cfg, m).shifted(_num(cfg, "shift"))
    g = _num(cfg, "grid", int)
    coarse, fine, _ = E.gradient_estimate_stability(kf, _num(cfg, "rho"), nd=g, nt=g)
    for name in ("C1", "C2", "required"):
        a, b = getattr(coarse, name), getattr(fine, name)
        rep.add(f"{name}_refinement_change", abs(a - b), 0.0, 0.1 * max(abs(a), abs(b)) + 1e-12)
    rep.add("constants_finite", float(math.isfinite(fine.C1) and math.isfinite(fine.C2)), 1.0, 0.0)


def run_sphere_kernel(cfg, rep):
    m = build_model(cfg)
    if m.kind is not M.Kind.SPHERE:
        raise ConfigError("sphere-kernel needs model = \"sphere\"")
    tol = _num(cfg, "tol")
    D, T = np.meshgrid(_floats(cfg, "d_grid"), _floats(cfg, "tau_grid"), indexing="ij")
    D = np.minimum(D, float(M.max_distance(m)))
    # the series is only compared where it keeps full relative accuracy
    both = T / m.radius ** 2 >= _num(cfg, "overlap_tau")
    if np.any(both):
        a = K.sphere_spectral_kernel(m.radius, m.n, D[both], T[both], method="spectral")
        b = K.sphere_spectral_kernel(m.radius, m.n, D[both], T[both], method="images")
        rep.add("series_vs_images_max_log_diff", float(np.max(np.abs(a.psi - b.psi))), 0.0, tol)
    kf = K.sphere_field(m)
    for t in _floats(cfg, "tau_grid"):
        dmax = float(M.max_distance(m))
        mass = integrate_adaptive(
            lambda d: np.exp(kf.psi(d, t)) * M.sphere_area(m, d), (0.0, dmax), 1e-13).value
        rep.add(f"mass tau={t:g}", mass, 1.0, tol)
    res = K.conjugate_pde_residual(kf, D, T)
    rep.add("equation_residual_max", float(np.max(np.abs(res))), 0.0, 1e-5)


RUNNERS = {
    "mvp": run_mvp,
    "heat-sphere": run_heat_sphere,
    "reduced-volume": run_reduced_volume,
    "soliton-density": run_soliton_density,
    "monotonicity": run_monotonicity,
    "identity-residual": run_identity,
    "entropy": run_entropy,
    "ni-mvi": run_transplant_mean,
    "bounds": run_bounds,
    "gradient-estimate": run_gradient,
    "sphere-kernel": run_sphere_kernel,
}


def run_scenario(scenario: str, cfg: dict) -> ScenarioReport:
    """Run one scenario. Domain and numeric errors propagate to the caller."""
    rep = ScenarioReport(scenario)
    t0 = time.perf_counter()
    try:
        RUNNERS[scenario](cfg, rep)
    finally:
        rep.wall_time = time.perf_counter() - t0
    return rep


# -- output ----------------------------------------------------------------------

def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def report_csv(rep: ScenarioReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in rep.checks:
        w.writerow([rep.scenario, c.name, _fmt(c.computed), _fmt(c.expected), _fmt(c.tolerance),
                    "true" if c.passed else "false"])
    return buf.getvalue()


def curve_csv(rep: ScenarioReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in rep.curve:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def report_json(rep: ScenarioReport) -> str:
    data = {
        "schema_version": SCHEMA_VERSION,
        "scenario": rep.scenario,
        "passed": rep.passed,
        "violations": rep.violations,
        "error": rep.error,
        "wall_time": rep.wall_time,
        "checks": [asdict(c) for c in rep.checks],
        "curve": [dict(zip(CURVE_COLUMNS, row)) for row in rep.curve],
    }
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


def emit(rep: ScenarioReport, out_dir: str, fmt: str = "csv") -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    main = os.path.join(out_dir, f"{rep.scenario}.{fmt}")
    with open(main, "w", newline="") as fh:
        fh.write(report_csv(rep) if fmt == "csv" else report_json(rep))
    paths.append(main)
    if rep.curve and fmt == "csv":
        cp = os.path.join(out_dir, f"{rep.scenario}_curve.csv")
        with open(cp, "w", newline="") as fh:
            fh.write(curve_csv(rep))
        paths.append(cp)
    return paths


# -- entry point -----------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatball-lab", description="Heat-ball mean value scenarios")
    p.add_argument("scenario", choices=["list", *SCENARIOS], help="scenario to run, or 'list'")
    p.add_argument("--config", help="TOML file with flat key = value settings")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.scenario == "list":
        for name, (desc, _) in SCENARIOS.items():
            print(f"{name:18s} {desc}")
        return 0

    rep = ScenarioReport(args.scenario)
    code = 0
    try:
        cfg = load_config(args.scenario, args.config, args.overrides)
        rep = run_scenario(args.scenario, cfg)
        code = 0 if rep.passed else 1
    except (ConfigError, M.DomainError, K.HypothesisError, OSError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        code = 2
    except NumericError as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        rep.add("numeric_failure", math.nan, 0.0, 0.0)
        code = 3

    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {_fmt(c.computed)} "
              f"(expected {_fmt(c.expected)} +/- {_fmt(c.tolerance)})")
    if rep.error:
        print(f"error: {rep.error}", file=sys.stderr)
    try:
        for path in emit(rep, args.out, args.format):
            print(f"wrote {path}")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return code or 2
    return code


if __name__ == "__main__":
    sys.exit(main())
