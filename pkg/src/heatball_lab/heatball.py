"""Heat balls, their weighted integrals and mean-value quantities.

The heat ball of radius r for a kernel Psi is ``E_r = {psi + n log r > 0}``.
Every kernel here is radial and decreasing in distance, so each time slice is
a geodesic ball whose radius ``rho(tau)`` is found by bisection, and the
slices are nonempty exactly for ``0 < tau < tau_sup``.

Space-time integrals are computed as an adaptive outer integral in tau of
slice integrals in distance, weighted by the distance-sphere area.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import models as M
from .kernels import HypothesisError, KernelField, conjugate_pde_residual
from .numerics import (
    Extrapolation,
    bisect_vectorized,
    extrapolate_to_zero,
    find_root,
    integrate_adaptive,
    integrate_batch,
    QuadratureError,
)

__all__ = [
    "ScaleError",
    "TestFunction",
    "constant",
    "coordinate_linear",
    "quadratic",
    "radial_polynomial",
    "Heatball",
    "build_heatball",
    "compute_P",
    "density_curve",
    "density_limit",
    "IdentityResult",
    "main_identity_residual",
    "heat_sphere_weight",
    "fulks_weight",
    "heat_sphere_mean",
    "entropy_level_integral",
    "transplant_mean_ratio",
    "finiteness_constant",
    "thread_count",
]


class ScaleError(M.DomainError):
    """The heat ball does not close up before the model's horizon."""


# -- test functions --------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """A function phi(x, t) described through its averages over distance spheres.

    ``mean(model, d, tau)`` is the average of phi over the sphere of radius d
    about the heat-ball center at time ``t = s - tau``; ``heat_image`` is the
    same average of ``(d/dt - Laplacian) phi``; ``sup_abs`` bounds |phi| on
    the sphere. ``s`` is the time of the heat-ball center.
    """
    __test__ = False  # not a pytest class

    name: str
    center_value: float
    mean: Callable
    heat_image: Callable
    sup_abs: Callable
    euclidean_only: bool = False
    constant: bool = False

    def check_model(self, m: M.ModelSpacetime):
        if self.euclidean_only and m.kind not in (M.Kind.EUCLIDEAN, M.Kind.GAUSSIAN_SOLITON):
            raise M.DomainError(f"test function {self.name} needs a flat model")


def _zeros(m, d, tau):
    return np.zeros(np.broadcast(d, tau).shape)


def constant(c: float = 1.0) -> TestFunction:
    f = lambda m, d, tau: np.full(np.broadcast(d, tau).shape, float(c))
    g = lambda m, d, tau: np.full(np.broadcast(d, tau).shape, abs(float(c)))
    return TestFunction(f"constant({c:g})", float(c), f, _zeros, g, constant=True)


def coordinate_linear(a: Sequence[float], b: float = 0.0, center: Optional[Sequence[float]] = None) -> TestFunction:
    """phi = a.x + b on flat space; the heat ball is centered at ``center``."""
    a = np.asarray(a, dtype=float)
    y = np.zeros_like(a) if center is None else np.asarray(center, dtype=float)
    c = float(a @ y + b)
    na = float(np.linalg.norm(a))
    f = lambda m, d, tau: np.full(np.broadcast(d, tau).shape, c)
    g = lambda m, d, tau: abs(c) + na * np.broadcast_to(d, np.broadcast(d, tau).shape)
    return TestFunction(f"linear({','.join(f'{v:g}' for v in a)};{b:g})", c, f, _zeros, g,
                        euclidean_only=True)


def quadratic(n: int, center: Optional[Sequence[float]] = None, s: float = 0.0,
              time_coeff: Optional[float] = None) -> TestFunction:
    """phi = |x|^2 + time_coeff * t on flat R^n; caloric when time_coeff = 2n (default)."""
    alpha = 2.0 * n if time_coeff is None else float(time_coeff)
    y = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    yy = float(y @ y)
    ny = math.sqrt(yy)
    f = lambda m, d, tau: yy + d * d + alpha * (s - tau)
    h = lambda m, d, tau: np.full(np.broadcast(d, tau).shape, alpha - 2.0 * n)
    g = lambda m, d, tau: (ny + d) ** 2 + abs(alpha) * np.abs(s - tau)
    name = "caloric_quadratic" if alpha == 2.0 * n else f"quadratic(t*{alpha:g})"
    return TestFunction(name, yy + alpha * s, f, h, g, euclidean_only=True)


def radial_polynomial(c0: float = 1.0, ct: float = 0.0, c2: float = 0.0, s: float = 0.0) -> TestFunction:
    """phi = c0 + ct*t + c2*dist(x, center)^2 (c2 != 0 only on static models)."""

    def mean(m, d, tau):
        if c2 != 0.0 and m.kind is M.Kind.SHRINKING_SPHERE:
            raise M.DomainError("radial terms are only supported on static models")
        return c0 + ct * (s - tau) + c2 * d * d + 0.0 * tau

    def image(m, d, tau):
        d = np.asarray(d, dtype=float)
        if c2 == 0.0:
            return np.full(np.broadcast(d, tau).shape, float(ct))
        with np.errstate(divide="ignore", invalid="ignore"):
            dm = d * M.log_area_derivative(m, d, tau)
        dm = np.where(d < 1e-12, m.n - 1.0, dm)
        return ct - c2 * (2.0 + 2.0 * dm)

    sup = lambda m, d, tau: np.abs(mean(m, d, tau))
    return TestFunction(f"radial({c0:g},{ct:g},{c2:g})", c0 + ct * s, mean, image, sup,
                        constant=(ct == 0.0 and c2 == 0.0))


# -- heat balls ------------------------------------------------------------------

@dataclass
class Heatball:
    kernel: KernelField
    r: float
    tau_sup: float

    @property
    def model(self) -> M.ModelSpacetime:
        return self.kernel.model

    @property
    def n(self) -> int:
        return self.kernel.n

    def psi_r(self, d, tau):
        return self.kernel.psi(d, tau) + self.n * math.log(self.r)

    def radius(self, tau) -> np.ndarray:
        """Slice radius rho(tau); 0 for tau >= tau_sup, the full diameter if the slice is everything."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.zeros_like(tau)
        live = (tau > 0) & (tau < self.tau_sup)
        if not np.any(live):
            return out
        t = tau[live]
        dmax = np.asarray(M.max_distance(self.model, t), dtype=float) * np.ones_like(t)
        res = np.empty_like(t)
        finite = np.isfinite(dmax)
        whole = np.zeros_like(t, dtype=bool)
        if np.any(finite):
            whole[finite] = self.psi_r(dmax[finite], t[finite]) > 0
        res[whole] = dmax[whole]
        todo = ~whole
        if np.any(todo):
            tt = t[todo]
            hi = np.where(finite[todo], dmax[todo], 4.0 * np.sqrt(tt))
            for _ in range(80):
                bad = self.psi_r(hi, tt) > 0
                if not np.any(bad):
                    break
                hi = np.where(bad, 2 * hi, hi)
            res[todo] = bisect_vectorized(lambda d: self.psi_r(d, tt), np.zeros_like(tt), hi, 64)
        out[live] = res
        return out

    # slice and space-time integrals

    def slice_integrals(self, tau, fn: Callable, rel_tol: float = 1e-12) -> np.ndarray:
        """int_0^rho(tau) fn(d, tau) * area(d, tau) dd for each tau."""
        tau = np.asarray(tau, dtype=float)
        rho = self.radius(tau)
        m = self.model
        out = np.zeros_like(tau)
        live = rho > 0
        if not np.any(live):
            return out
        t = tau[live]
        T = t[:, None]

        def g(D):
            return fn(D, T) * M.sphere_area(m, np.minimum(D, M.max_distance(m, T)), T)

        vals, errs = integrate_batch(g, np.zeros_like(t), rho[live])
        bad = errs > rel_tol * np.abs(vals) + 1e-300
        for i in np.flatnonzero(bad):
            ti = t[i]
            try:
                vals[i] = integrate_adaptive(
                    lambda D: fn(D, ti) * M.sphere_area(m, np.minimum(D, M.max_distance(m, ti)), ti),
                    (0.0, rho[live][i]), 1e-300, rel_tol=rel_tol, cluster_ends=False,
                    max_subdivisions=200,
                ).value
            except QuadratureError:
                # integrand noise floor (differenced kernels) reached; keep the batch value
                pass
        out[live] = vals
        return out

    def integrate(self, fn: Callable, rel_tol: float = 1e-11, abs_tol: Optional[float] = None) -> float:
        """Space-time integral of a radial integrand fn(d, tau) over the heat ball."""
        if abs_tol is None:
            abs_tol = 1e-14 * self.r ** self.n
        res = integrate_adaptive(
            lambda ts: self.slice_integrals(ts, fn, max(rel_tol * 1e-1, 1e-12)),
            (0.0, self.tau_sup), abs_tol, rel_tol=rel_tol, order=10,
        )
        return res.value

    def boundary_points(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """(d, tau) samples on the boundary, excluding the two degenerate ends."""
        tau = self.tau_sup * (np.arange(1, count + 1) / (count + 1))
        return self.radius(tau), tau


def build_heatball(kf: KernelField, r: float) -> Heatball:
    """Locate tau_sup, where the center slice closes up.

    Raises:
        ScaleError: if psi + n log r is still positive at the horizon.
    """
    if not r > 0:
        raise M.DomainError("heat-ball radius must be positive")
    m = kf.model
    n = kf.n
    tbar = m.horizon

    def g(tau):
        return float(kf.psi(0.0, tau)) + n * math.log(r)

    if g(tbar) > 0:
        raise ScaleError(
            f"heat ball of radius {r:g} does not close before the horizon {tbar:g} on {m.name}"
        )
    lo = tbar
    for _ in range(200):
        lo *= 0.5
        if g(lo) > 0:
            break
    else:  # pragma: no cover - kernels blow up at tau -> 0
        raise ScaleError("kernel does not blow up at the base point")
    tau_sup = find_root(g, (lo, min(2 * lo, tbar)) if g(min(2 * lo, tbar)) <= 0 else (lo, tbar), 1e-16)
    return Heatball(kf, float(r), tau_sup)


def _integrand(hb: Heatball, phi: TestFunction, form: str):
    kf = hb.kernel
    m = hb.model
    n = hb.n
    logr = n * math.log(hb.r)
    if form == "defining":
        def fn(D, T):
            v = kf.values(D, T)
            w = v.psi_d ** 2 - (v.psi + logr) * M.trace_h(m, T)
            return w * phi.mean(m, D, T)
        return fn
    if not phi.constant:
        raise M.DomainError(f"the {form} form needs a constant test function")
    c = phi.center_value
    if form == "alternate":
        def fn(D, T):
            v = kf.values(D, T)
            return c * (v.psi_d ** 2 - v.psi_tau)
        return fn
    if form == "reduced":
        if not kf.reduced:
            raise M.DomainError("the reduced form needs a reduced-volume kernel")

        def fn(D, T):
            ell, l_d, _, l_t = kf.ell(D, T)
            return c * (n / (2 * T) + l_t + l_d ** 2)
        return fn
    raise ValueError(f"unknown form {form!r}")


def compute_P(kf: KernelField, r: float, phi: Optional[TestFunction] = None,
              form: str = "defining", rel_tol: float = 1e-11) -> float:
    """The weighted heat-ball integral int_{E_r} [|grad psi|^2 - psi_(r) tr h] phi.

    ``form="alternate"`` integrates ``d psi/dt + |grad psi|^2`` instead and
    ``form="reduced"`` the reduced-distance expression; both need phi constant.
    """
    phi = constant(1.0) if phi is None else phi
    phi.check_model(kf.model)
    hb = build_heatball(kf, r)
    return hb.integrate(_integrand(hb, phi, form), rel_tol)


def thread_count() -> int:
    raw = os.environ.get("HEATBALL_THREADS", "")
    try:
        k = int(raw)
    except ValueError:
        k = 1
    return max(1, k)


def density_curve(kf: KernelField, rs: Sequence[float], phi: Optional[TestFunction] = None,
                  form: str = "defining", rel_tol: float = 1e-11) -> list[tuple[float, float, float]]:
    """[(r, P(r), P(r)/r^n)] in the order given. Parallel over r, capped by HEATBALL_THREADS."""
    n = kf.n

    def one(r):
        p = compute_P(kf, r, phi, form, rel_tol)
        return float(r), p, p / r ** n

    workers = min(thread_count(), len(rs))
    if workers <= 1:
        return [one(r) for r in rs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, rs))


def density_limit(kf: KernelField, rs: Sequence[float], phi: Optional[TestFunction] = None,
                  order: int = 2, form: str = "defining") -> Extrapolation:
    """r -> 0 limit of P/r^n by extrapolation in r^2."""
    curve = density_curve(kf, rs, phi, form)
    return extrapolate_to_zero([(r, q) for r, _, q in curve], order)


@dataclass
class IdentityResult:
    lhs: float
    rhs: float
    residual: float
    p0: float = field(default=0.0)
    p1: float = field(default=0.0)


def main_identity_residual(kf: KernelField, phi: TestFunction, r0: float, r1: float,
                           nodes: int = 64, rel_tol: float = 1e-11) -> IdentityResult:
    """Both sides of the radial derivative identity for P/r^n.

    LHS = P(r1)/r1^n - P(r0)/r0^n; RHS = int_{r0}^{r1} n r^{-n-1} J(r) dr
    with J(r) = int_{E_r} [res * phi - psi_(r) * (phi_t - Lap phi)], where res
    is the conjugate-equation residual of the kernel (taken as 0 for kernels
    that solve it exactly). The outer integral uses Gauss-Legendre in r.
    """
    if not 0 < r0 < r1:
        raise M.DomainError("need 0 < r0 < r1")
    phi.check_model(kf.model)
    n = kf.n
    m = kf.model
    p0 = compute_P(kf, r0, phi, rel_tol=rel_tol)
    p1 = compute_P(kf, r1, phi, rel_tol=rel_tol)
    lhs = p1 / r1 ** n - p0 / r0 ** n
    x, w = np.polynomial.legendre.leggauss(nodes)
    rr = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * x
    total = []
    for ri, wi in zip(rr, w):
        hb = build_heatball(kf, ri)
        logr = n * math.log(ri)

        def fn(D, T):
            val = -(kf.psi(D, T) + logr) * phi.heat_image(m, D, T)
            if not kf.exact:
                val = val + conjugate_pde_residual(kf, D, T) * phi.mean(m, D, T)
            return val

        J = hb.integrate(fn, rel_tol)
        total.append(0.5 * (r1 - r0) * wi * n / ri ** (n + 1) * J)
    rhs = math.fsum(total)
    return IdentityResult(lhs, rhs, lhs - rhs, p0, p1)


# -- heat spheres ------------------------------------------------------------------

def heat_sphere_weight(kf: KernelField, d, tau) -> np.ndarray:
    """|grad Psi|^2 / sqrt(Psi_t^2 + |grad Psi|^2) at (d, tau)."""
    v = kf.values(d, tau)
    K = np.exp(v.psi)
    return K * v.psi_d ** 2 / np.sqrt(v.psi_tau ** 2 + v.psi_d ** 2)


def fulks_weight(n: int, r: float, d, tau) -> np.ndarray:
    """Explicit Euclidean heat-sphere weight with the r^{-n} normalization."""
    d = np.asarray(d, dtype=float)
    tau = np.asarray(tau, dtype=float)
    d2 = d * d
    return r ** (-n) * d2 / np.sqrt(4 * d2 * tau ** 2 + (d2 - 2 * n * tau) ** 2)


def heat_sphere_mean(kf: KernelField, r: float, phi: Optional[TestFunction] = None,
                     rel_tol: float = 1e-11) -> float:
    """Weighted average of phi over the heat sphere, static models only.

    Parametrizing the boundary by tau, the space-time area element is
    area(rho) * sqrt(1 + rho'^2) dtau with rho' = -psi_tau / psi_d, and that
    square root cancels against the weight's denominator, leaving
    ``r^{-n} |psi_d| area(rho) dtau``.
    """
    m = kf.model
    if m.kind is M.Kind.SHRINKING_SPHERE:
        raise M.DomainError("heat-sphere means are for static metrics")
    phi = constant(1.0) if phi is None else phi
    phi.check_model(m)
    hb = build_heatball(kf, r)
    n = kf.n

    def f(ts):
        rho = hb.radius(ts)
        out = np.zeros_like(ts)
        ok = rho > 0
        if np.any(ok):
            t = ts[ok]
            p = rho[ok]
            v = kf.values(p, t)
            area = M.sphere_area(m, np.minimum(p, M.max_distance(m, t)), t)
            out[ok] = np.abs(v.psi_d) * area * phi.mean(m, p, t)
        return out

    res = integrate_adaptive(f, (0.0, hb.tau_sup), 1e-14, rel_tol=rel_tol)
    return res.value / r ** n


# -- entropy and comparison --------------------------------------------------------

def entropy_level_integral(kf: KernelField, fbar: float, rel_tol: float = 1e-11) -> float:
    """int_{f < fbar} (Lap f + R) e^{-fbar} over space-time, with f = -log Psi."""
    m = kf.model
    if not M.is_ricci_flow(m):
        raise HypothesisError(f"{m.name} is not a Ricci flow")
    if not kf.fundamental:
        raise HypothesisError(f"{kf!r} is not a fundamental solution based at a point")
    n = kf.n
    r = math.exp(fbar / n)
    hb = build_heatball(kf, r)

    def fn(D, T):
        v = kf.values(D, T)
        with np.errstate(divide="ignore", invalid="ignore"):
            drift = M.log_area_derivative(m, D, T) * v.psi_d
        drift = np.where(D < 1e-12, (n - 1) * v.psi_dd, drift)
        lap_f = -(v.psi_dd + drift)
        return (lap_f + M.scalar_curvature(m, T)) * math.exp(-fbar)

    return hb.integrate(fn, rel_tol)


def transplant_mean_ratio(model: M.ModelSpacetime, k: int, r: float,
                        phi: Optional[TestFunction] = None, tol: float = 1e-9) -> tuple[float, bool]:
    """Transplanted-kernel mean r^{-n} int |grad log Psi~|^2 phi over the comparison heat ball.

    Returns the mean and whether ``phi(center) >= mean - tol``.
    """
    from .kernels import transplant_field

    kf = transplant_field(model, k)
    phi = constant(1.0) if phi is None else phi
    phi.check_model(model)
    hb = build_heatball(kf, r)
    n = kf.n

    def fn(D, T):
        return kf.values(D, T).psi_d ** 2 * phi.mean(model, D, T)

    val = hb.integrate(fn) / r ** n
    return val, bool(phi.center_value >= val - tol)


def finiteness_constant(kf: KernelField, rs: Sequence[float], phis: Sequence[TestFunction],
                        samples: int = 64) -> float:
    """max over r and phi of |P(r)| / (r^n sup_{E_r} |phi|)."""
    n = kf.n
    m = kf.model
    worst = 0.0
    for r in rs:
        hb = build_heatball(kf, r)
        ts = hb.tau_sup * (np.arange(samples + 1) + 0.5) / (samples + 1)
        rho = hb.radius(ts)
        D = rho[:, None] * np.linspace(0, 1, 9)[None, :]
        for phi in phis:
            phi.check_model(m)
            sup = float(np.max(phi.sup_abs(m, D, ts[:, None])))
            sup = max(sup, abs(phi.center_value))
            p = hb.integrate(_integrand(hb, phi, "defining"))
            worst = max(worst, abs(p) / (r ** n * sup))
    return worst
