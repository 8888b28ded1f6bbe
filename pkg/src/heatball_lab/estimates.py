"""Auditors for explicit comparison bounds and the local gradient estimate.

Each audit evaluates closed-form bounds against computed quantities on a
grid and reports the violation count and the worst signed margin (positive
means the bound holds with room to spare).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import models as M
from . import reduced_geometry as RG
from .heatball import ScaleError, build_heatball
from .kernels import HypothesisError, KernelField, reduced_volume_field
from .numerics import NumericError

__all__ = [
    "BoundReport",
    "GradientEstimateParams",
    "AuditError",
    "ell_two_sided_bounds",
    "audit_ell_bounds",
    "heatball_radius_bound",
    "containment_constant",
    "check_containment",
    "geodesic_speed_envelopes",
    "audit_speed_envelopes",
    "gradient_estimate_audit",
    "gradient_estimate_stability",
]


class AuditError(NumericError):
    """No admissible constants below the cap."""

    def __init__(self, msg, worst_point=None):
        super().__init__(msg)
        self.worst_point = worst_point


@dataclass
class BoundReport:
    grid: str
    violations: int
    worst_margin: float
    checked: int = 0
    constants: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def merge(self, other: "BoundReport") -> "BoundReport":
        return BoundReport(
            f"{self.grid}; {other.grid}",
            self.violations + other.violations,
            min(self.worst_margin, other.worst_margin),
            self.checked + other.checked,
            {**self.constants, **other.constants},
        )


def _report(grid, margins, scale, tol, constants=None) -> BoundReport:
    margins = np.asarray(margins, dtype=float).ravel()
    scale = np.broadcast_to(np.asarray(scale, dtype=float), margins.shape)
    bad = margins < -tol * np.maximum(1.0, np.abs(scale))
    bad |= ~np.isfinite(margins)
    worst = float(np.min(margins)) if margins.size else math.inf
    return BoundReport(grid, int(np.count_nonzero(bad)), worst, int(margins.size), constants or {})


# -- reduced distance --------------------------------------------------------------

def ell_two_sided_bounds(k: float, K: float, d0, tau, n: int):
    """Lower and upper bounds on the reduced distance from Ricci pinching.

    ``d0`` is the distance at tau = 0; ``-k g <= Rc <= K g`` on [0, tau].
    """
    if k < 0 or K < 0:
        raise M.DomainError("k and K must be nonnegative")
    d0 = np.asarray(d0, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise M.DomainError("tau must be positive")
    q = d0 * d0 / (4 * tau)
    lo = np.exp(-2 * k * tau) * q - n * k * tau / 3
    hi = np.exp(2 * K * tau) * q + n * K * tau / 3
    return lo, hi


def audit_ell_bounds(m: M.ModelSpacetime, points: int = 50, tol: float = 1e-9,
                     seed: int = 0) -> BoundReport:
    """Check the reduced distance against its two-sided bounds on a random grid.

    Needs a smooth g(0), so the vertex-based shrinking sphere is rejected.
    """
    if not M.is_ricci_flow(m):
        raise HypothesisError(f"{m.name} is not a Ricci flow")
    if m.kind is M.Kind.SHRINKING_SPHERE and m.offset == 0:
        raise HypothesisError("g(0) is singular at the vertex")
    rng = np.random.default_rng(seed)
    tau = rng.uniform(0.02, 1.0, points) * m.horizon
    frac = rng.uniform(0.0, 1.0, points)
    if m.kind is M.Kind.SHRINKING_SPHERE:
        # stay inside the cut locus
        d = frac * 0.95 * M.max_distance(m, tau)
    else:
        d = frac * 4.0 * np.sqrt(tau)
    k, K = M.ricci_bounds(m, 0.0, float(tau.max()))
    ell = RG.reduced_distance(m, d, tau)
    d0 = M.distance_at(m, d, tau, 0.0)
    lo, hi = ell_two_sided_bounds(k, K, d0, tau, m.n)
    margins = np.concatenate([ell - lo, hi - ell])
    return _report(f"ell bounds on {m.name}, {points} points", margins,
                   np.concatenate([ell, ell]), tol, {"k": k, "K": K})


# -- heatball containment ----------------------------------------------------------

def containment_constant(k: float, tau_bar: float) -> float:
    return math.exp(4 * k * tau_bar / 3) / (4 * math.pi)


def heatball_radius_bound(r: float, k: float, tau, tau_bar: float, n: int):
    """(rho, c): the comparison slice radius at tau and the lifetime constant."""
    if not r > 0:
        raise M.DomainError("r must be positive")
    if k < 0:
        raise M.DomainError("k must be nonnegative")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise M.DomainError("tau must be positive")
    inner = 2 * n * tau * np.log(r * r / (4 * math.pi * tau)) + (4.0 / 3.0) * n * k * tau ** 2
    rho = np.exp(k * tau) * np.sqrt(np.maximum(inner, 0.0))
    c = containment_constant(k, tau_bar)
    # inner <= 0 there analytically; the k = 0 edge is a log(1) rounding case
    rho = np.where(tau >= c * r * r, 0.0, rho)
    return rho, c


def check_containment(m: M.ModelSpacetime, r: float, kf: Optional[KernelField] = None,
                      slices: int = 100, tol: float = 1e-9) -> BoundReport:
    """Audit the reduced-volume heatball against the comparison radii.

    Three families of checks: the lifetime tau_sup <= c r^2; every slice
    radius, pulled back to g(0), within rho(r, k, tau); and rho = 0 for
    c r^2 <= tau <= tau_bar.
    """
    if not M.is_ricci_flow(m):
        raise HypothesisError(f"{m.name} is not a Ricci flow")
    kf = reduced_volume_field(m) if kf is None else kf
    n = m.n
    tbar = m.horizon
    k, _ = M.ricci_bounds(m, 0.0, tbar)
    c = containment_constant(k, tbar)
    cap = min(tbar / c, 4 * math.pi)
    if not 0 < r * r <= cap * (1 + 1e-12):
        raise ScaleError(f"need 0 < r^2 <= {cap:g}, got r = {r:g}")

    hb = build_heatball(kf, r)
    life = c * r * r - hb.tau_sup

    ts = hb.tau_sup * np.arange(1, slices + 1) / (slices + 1)
    rho_slice = M.distance_at(m, hb.radius(ts), ts, 0.0)
    rho_bound, _ = heatball_radius_bound(r, k, ts, tbar, n)
    slice_margin = rho_bound - rho_slice

    tail = np.linspace(min(c * r * r, tbar), tbar, 25)
    rho_tail, _ = heatball_radius_bound(r, k, tail, tbar, n)

    # compare squares past the lifetime: sqrt would amplify roundoff at tau = c r^2
    margins = np.concatenate([[life], slice_margin, -rho_tail ** 2])
    scale = np.concatenate([[c * r * r], rho_bound, 2 * n * tail])
    return _report(f"containment on {m.name}, r={r:g}, {slices} slices", margins, scale, tol,
                   {"k": k, "c": c, "tau_sup": hb.tau_sup})


# -- L-geodesic speed --------------------------------------------------------------

def geodesic_speed_envelopes(gamma0: float, k: float, K: float, A: float,
                             tau0: float, tau1: float, tau):
    """Envelopes (lower, upper) for |d gamma / d tau| along an L-geodesic.

    ``gamma0`` is sqrt(tau) |d gamma / d tau| at tau0; ``A`` bounds |grad R|.
    The k -> 0 and K -> 0 limits are built in through expm1.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < tau0) or np.any(tau > tau1):
        raise M.DomainError("need tau0 <= tau <= tau1")
    dt = tau - tau0
    a = A * math.sqrt(tau1)
    up_rate = np.expm1(k * dt) / k if k > 0 else dt
    lo_rate = np.expm1(-K * dt) / K if K > 0 else -dt
    with np.errstate(divide="ignore"):
        half = 1.0 / (2 * np.sqrt(tau))
    upper = half * (2 * gamma0 * np.exp(k * dt) + a * up_rate)
    lower = half * (2 * gamma0 * np.exp(-K * dt) + a * lo_rate)
    return lower, upper


def audit_speed_envelopes(m: M.ModelSpacetime, targets: Sequence[tuple[float, float]],
                          tol: float = 1e-8) -> BoundReport:
    """Solve an L-geodesic to each (d, tau) and test the envelopes at every node.

    The comparison is made on sqrt(sigma)|d gamma/d sigma| so that the node at
    sigma = 0 is included. R is constant in space on every model, so A = 0.
    """
    margins, scales = [], []
    for d, tau in targets:
        geo = RG.solve_l_geodesic(m, d, tau)
        gam = 0.5 * geo.speed(m)  # sqrt(sigma) |gamma_dot| = |gamma'(s)| / 2
        k, K = M.ricci_bounds(m, 0.0, tau)
        sig = np.minimum(geo.s ** 2, tau)
        lo, hi = geodesic_speed_envelopes(float(gam[0]), k, K, 0.0, 0.0, tau, sig)
        root = geo.s
        with np.errstate(invalid="ignore"):
            lo_g, hi_g = lo * root, hi * root
        # at sigma = 0 the product is 0 * inf; the envelopes pinch to gamma0 there
        lo_g = np.where(root == 0, gam[0], lo_g)
        hi_g = np.where(root == 0, gam[0], hi_g)
        margins += [gam - lo_g, hi_g - gam]
        scales += [gam, gam]
    return _report(f"speed envelopes on {m.name}, {len(targets)} geodesics",
                   np.concatenate(margins) if margins else [], np.concatenate(scales) if scales else [],
                   tol)


# -- local gradient estimate -------------------------------------------------------

@dataclass
class GradientEstimateParams:
    k1: float
    k2: float
    k3: float
    rho: float
    A: float = math.nan
    C1: float = math.nan
    C2: float = math.nan
    required: float = math.nan        # unclamped C2 needed at C1 = 0
    worst_point: tuple = ()
    grid: tuple = ()

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3) < 0 or not self.rho > 0:
            raise M.DomainError("k1, k2, k3 must be >= 0 and rho > 0")


def static_curvature_params(m: M.ModelSpacetime, rho: float) -> GradientEstimateParams:
    """(k1, k2, k3) for a static model: h = 0, so only the Ricci lower bound is nonzero."""
    if m.kind is M.Kind.SHRINKING_SPHERE:
        raise HypothesisError("the audit runs on static models")
    k, _ = M.ricci_bounds(m, 0.0, m.horizon)
    return GradientEstimateParams(0.0, k, 0.0, rho)


_C1_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


def _kernel_sup(kf: KernelField, tau_bar: float) -> float:
    # radially decreasing, so the sup over a region is on the center line
    ts = np.concatenate([[0.0], tau_bar * np.geomspace(1e-6, 1.0, 400)])
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = kf.psi(np.zeros_like(ts), ts)
    except M.DomainError:
        vals = np.array([math.inf])
    if not np.all(np.isfinite(vals)):
        raise HypothesisError(f"{kf!r} is not bounded near tau = 0; shift it in time first")
    return float(np.exp(vals.max()))


def gradient_estimate_audit(kf: KernelField, rho: float,
                            params: Optional[GradientEstimateParams] = None,
                            nd: int = 24, nt: int = 24, cap: float = 1e6) -> GradientEstimateParams:
    """Fit the smallest constants making the local gradient estimate hold on a grid.

    The grid covers distances d < rho and times 0 < tau <= horizon. For each
    C1 on a coarse grid the least admissible C2 is exact; the pair with the
    smallest total contribution wins (ties go to the smaller C1).
    """
    m = kf.model
    params = static_curvature_params(m, rho) if params is None else params
    tbar = m.horizon
    A = _kernel_sup(kf, tbar)

    d = rho * np.arange(nd) / nd
    if m.kind is M.Kind.SPHERE:
        d = np.minimum(d, float(M.max_distance(m)))
    t = tbar * np.arange(1, nt + 1) / nt
    D, T = np.meshgrid(d, t, indexing="ij")
    v = kf.values(D, T)
    lhs = v.psi_d ** 2
    weight = (1.0 + math.log(A) - v.psi) ** 2
    base = 1.0 / T + 2 * params.k2 + params.k3 + math.sqrt(params.k3)
    sk = math.sqrt(params.k2) * rho
    coth_term = sk / math.tanh(sk) if sk > 0 else 1.0
    need = rho * rho * (lhs / weight - base)          # >= C1 * a + C2 required
    a = rho * rho * params.k1 + coth_term
    if not np.all(np.isfinite(need)):
        raise AuditError("non-finite gradient ratio on the audit grid")

    worst = np.unravel_index(int(np.argmax(need)), need.shape)
    worst_point = (float(D[worst]), float(T[worst]))
    required = float(need[worst])

    best = None
    for c1 in _C1_GRID:
        c2 = max(0.0, float(np.max(need - c1 * a)))
        total = c1 * a + c2
        if best is None or total < best[0] - 1e-15:
            best = (total, c1, c2)
    _, c1, c2 = best
    if c1 * a + c2 > cap:
        raise AuditError(f"constants exceed cap {cap:g}", worst_point)
    return replace(params, A=A, C1=c1, C2=c2, required=required,
                   worst_point=worst_point, grid=(nd, nt))


def gradient_estimate_stability(kf: KernelField, rho: float,
                                params: Optional[GradientEstimateParams] = None,
                                nd: int = 24, nt: int = 24, rel: float = 0.1):
    """Fit on a grid and on its 2x refinement.

    Returns (coarse, fine, stable) where stable means each fitted constant
    and the unclamped requirement moved by at most ``rel`` of their larger
    magnitude.
    """
    coarse = gradient_estimate_audit(kf, rho, params, nd, nt)
    fine = gradient_estimate_audit(kf, rho, params, 2 * nd, 2 * nt)

    def close(x, y):
        return abs(x - y) <= rel * max(abs(x), abs(y)) + 1e-12

    stable = close(coarse.C1, fine.C1) and close(coarse.C2, fine.C2) \
        and close(coarse.required, fine.required)
    return coarse, fine, stable
