"""Reduced length, reduced distance and reduced volume on Ricci-flow models.

Paths are radial and described by a reference coordinate ``u``: the distance
from the base point in the metric at ``tau = 1``. The actual length element at
``tau`` is ``metric_scale(tau) * du``. Paths are parametrized by
``s = sqrt(tau)``, in which the action reads
``L = int_0^sqrt(tau) (|gamma'(s)|^2 / 2 + 2 s^2 R) ds``.

Because R is constant in space on every model here and Rc is a multiple of
g, the Euler-Lagrange equation reduces to the linear radial ODE
``u'' = -4 s lambda(s^2) u'`` (Rc = lambda g). The family of solutions from
the base point therefore scales linearly in the initial speed, which is what
the tabulated reduced distance exploits.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import models as M
from .numerics import (
    DiscretePath,
    NumericError,
    find_root,
    integrate_adaptive,
    integrate_ode,
    minimize_path_action,
)

__all__ = [
    "LGeodesic",
    "RangeError",
    "l_action",
    "l_action_gradient",
    "curvature_action",
    "solve_l_geodesic",
    "minimize_l_length",
    "reduced_distance",
    "reduced_distance_derivatives",
    "reduced_volume",
    "shrinking_sphere_reduced_distance",
    "soliton_reduced_volume",
]


class RangeError(NumericError):
    """Shooting could not bracket the requested endpoint."""


def _require_flow(m: M.ModelSpacetime):
    if not M.is_ricci_flow(m):
        raise M.DomainError(f"{m.name} is not a Ricci flow; reduced geometry is undefined")


def _smooth_origin(m: M.ModelSpacetime) -> bool:
    return not (m.kind is M.Kind.SHRINKING_SPHERE and m.offset == 0.0)


def _to_reference(m, d, tau):
    return np.asarray(d, dtype=float) / M.metric_scale(m, tau)


def _gl3(a, b):
    # 3-point Gauss-Legendre abscissae/weights on each [a_i, b_i]
    x = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
    w = np.array([5.0, 8.0, 5.0]) / 9.0
    h = 0.5 * (b - a)
    return (0.5 * (a + b))[:, None] + h[:, None] * x, h[:, None] * w


def curvature_action(m: M.ModelSpacetime, tau: float) -> float:
    """Path-independent part int_0^sqrt(tau) 2 s^2 R(s^2) ds."""
    _require_flow(m)
    if m.kind is not M.Kind.SHRINKING_SPHERE:
        return 0.0
    if m.offset == 0.0:
        return m.n * math.sqrt(tau)  # 2 s^2 * n/(2 s^2)
    res = integrate_adaptive(lambda s: 2 * s * s * M.scalar_curvature(m, s * s),
                             (0.0, math.sqrt(tau)), 1e-13, cluster_ends=False)
    return res.value


def l_action(m: M.ModelSpacetime, path: DiscretePath) -> float:
    """Action of a piecewise-linear radial path ``u(s)``.

    The kinetic term is integrated exactly on each segment (the squared scale
    factor is quadratic in s), so the value is the true action of an
    admissible path and bounds the minimum from above.
    """
    _require_flow(m)
    s, u = path.s, path.u
    a, b = s[:-1], s[1:]
    slope = np.diff(u) / (b - a)
    x, w = _gl3(a, b)
    scale2 = M.metric_scale(m, x * x) ** 2
    kinetic = 0.5 * np.sum(slope ** 2 * np.sum(w * scale2, axis=1))
    return float(kinetic) + curvature_action(m, float(s[-1]) ** 2)


def l_action_gradient(m: M.ModelSpacetime, path: DiscretePath) -> np.ndarray:
    s, u = path.s, path.u
    a, b = s[:-1], s[1:]
    h = b - a
    x, w = _gl3(a, b)
    weight = np.sum(w * M.metric_scale(m, x * x) ** 2, axis=1)
    flux = np.diff(u) / h ** 2 * weight
    g = np.zeros_like(u)
    g[:-1] -= flux
    g[1:] += flux
    return g


@dataclass
class LGeodesic:
    s: np.ndarray          # nodes in s = sqrt(sigma)
    u: np.ndarray          # reference coordinate along the path
    du: np.ndarray         # du/ds
    L: float
    initial_speed: float   # du/ds at s = 0
    tau: float
    long_way: bool = False

    def speed(self, m: M.ModelSpacetime) -> np.ndarray:
        """|gamma'(s)| measured in g(s^2)."""
        return np.abs(self.du) * M.metric_scale(m, self.s ** 2)

    def tau_speed(self, m: M.ModelSpacetime) -> np.ndarray:
        """|d gamma / d sigma| = |gamma'(s)| / (2 s)."""
        with np.errstate(divide="ignore"):
            return self.speed(m) / (2 * self.s)


def _field(m):
    def f(s, y):
        lam = float(M.ricci_coefficient(m, s * s))
        sc2 = float(M.metric_scale(m, s * s)) ** 2
        u, du = y[0], y[1]
        return np.array([du, -4.0 * s * lam * du, 0.5 * sc2 * du * du,
                         2 * s * s * float(M.scalar_curvature(m, s * s))])
    return f


def _shoot(m, v0, s_end, tol):
    return integrate_ode(_field(m), [0.0, v0, 0.0, 0.0], (0.0, s_end), tol)


def solve_l_geodesic(m: M.ModelSpacetime, d: float, tau: float, tol: float = 1e-10,
                     *, max_speed: float = 1e6) -> LGeodesic:
    """Minimal L-geodesic from the base point at tau=0 to distance d at tau.

    Shoots on the initial speed with a bracketed root find. On spheres the
    path around the far side (through the antipode) is also shot and the
    smaller action wins.
    """
    _require_flow(m)
    if not _smooth_origin(m):
        raise M.DomainError("the base point is a vertex (offset 0); use the closed form")
    if tau <= 0:
        raise M.DomainError("tau must be positive")
    s_end = math.sqrt(tau)
    target = float(_to_reference(m, d, tau))
    targets = [(target, False)]
    if m.kind is M.Kind.SHRINKING_SPHERE:
        circ = 2 * math.pi * float(M.sphere_radius(m, 1.0))
        if target > circ / 2 * (1 + 1e-12):
            raise M.DomainError("distance beyond the antipode")
        targets.append((circ - target, True))

    best = None
    for tgt, long_way in targets:
        if tgt == 0.0:
            v0 = 0.0
        else:
            def miss(v):
                return float(_shoot(m, v, s_end, tol * 1e-2).sol(s_end)[0]) - tgt

            hi = max(1.0, tgt / s_end)
            while miss(hi) < 0:
                hi *= 4
                if hi > max_speed:
                    raise RangeError(f"cannot reach u={tgt} by tau={tau} with speed <= {max_speed}")
            v0 = find_root(miss, (0.0, hi), tol * 1e-2 * max(1.0, hi))
        traj = _shoot(m, v0, s_end, tol * 1e-2)
        yend = traj.sol(s_end)
        L = float(yend[2] + yend[3])
        nodes = np.linspace(0.0, s_end, 201)
        Y = traj.sol(nodes)
        geo = LGeodesic(nodes, Y[0], Y[1], L, v0, tau, long_way)
        if best is None or geo.L < best.L:
            best = geo
    return best


def minimize_l_length(m: M.ModelSpacetime, d: float, tau: float, nodes: int = 400,
                      tol: float = 1e-12) -> tuple[DiscretePath, float]:
    """Direct minimization of the discretized action (independent of the ODE)."""
    _require_flow(m)
    s = np.linspace(0.0, math.sqrt(tau), nodes + 1)
    target = float(_to_reference(m, d, tau))
    init = DiscretePath(s, target * s / s[-1])
    return minimize_path_action(lambda p: l_action(m, p), init, tol,
                                grad=lambda p: l_action_gradient(m, p))


def shrinking_sphere_reduced_distance(n: int, offset: float, d, tau):
    """Closed-form reduced distance on the shrinking sphere.

    The minimizing path keeps a fixed great circle, so only the angular speed
    profile matters; minimizing the weighted kinetic term gives the closed form
    below (and the vertex case offset=0 collapses to the constant n/2).
    """
    d = np.asarray(d, dtype=float)
    tau = np.asarray(tau, dtype=float)
    s = np.sqrt(tau)
    if offset == 0.0:
        return np.full(np.broadcast(d, tau).shape, n / 2.0)
    radius = np.sqrt(2.0 * (n - 1) * (tau + offset))
    theta = d / radius
    q = math.sqrt(offset)
    F = np.arctan(s / q) / q
    L = (n - 1) * theta ** 2 / F + n * (s - q * np.arctan(s / q))
    return L / (2 * s)


class _ShrinkingTable:
    """Tabulated reduced distance for a shrinking sphere with smooth origin.

    One unit-speed shot over [0, sqrt(horizon)] supplies u1(s), its kinetic
    action K1(s) and the curvature action C(s); by linearity
    ``L(u, s) = u^2 K1/u1^2 + C``. Smooth ratios q = s K1/u1^2 and c = C/s^3
    are splined in s.
    """

    def __init__(self, m: M.ModelSpacetime, nodes: int = 400, tol: float = 1e-12):
        self.m = m
        s_max = math.sqrt(m.horizon) * 1.02
        traj = _shoot(m, 1.0, s_max, tol)
        s = np.linspace(0.0, s_max, nodes + 1)
        Y = traj.sol(s[1:])
        u1, k1, c1 = Y[0], Y[2], Y[3]
        sig0 = float(M.metric_scale(m, 0.0)) ** 2
        q = np.concatenate([[0.5 * sig0], s[1:] * k1 / u1 ** 2])
        c = np.concatenate([[2.0 * float(M.scalar_curvature(m, 0.0)) / 3.0], c1 / s[1:] ** 3])
        self.q = CubicSpline(s, q)
        self.c = CubicSpline(s, c)
        self.s_max = s_max

    def __call__(self, d, tau):
        m = self.m
        d = np.asarray(d, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0) or np.any(np.sqrt(tau) > self.s_max):
            raise M.DomainError("tau outside the tabulated range")
        s = np.sqrt(tau)
        sc = M.metric_scale(m, tau)
        u = d / sc
        q, dq = self.q(s), self.q(s, 1)
        c, dc = self.c(s), self.c(s, 1)
        ell = u * u * q / (2 * s * s) + s * s * c / 2
        ell_u = u * q / (s * s)
        ell_uu = q / (s * s)
        ell_s = u * u * (dq / (2 * s * s) - q / s ** 3) + s * c + s * s * dc / 2
        return ell, ell_u / sc, ell_uu / sc ** 2, ell_s / (2 * s)


@functools.lru_cache(maxsize=16)
def _table(m: M.ModelSpacetime) -> _ShrinkingTable:
    return _ShrinkingTable(m)


def reduced_distance_derivatives(m: M.ModelSpacetime, d, tau):
    """(ell, d ell/dd, d^2 ell/dd^2, d ell/dtau at a fixed point)."""
    _require_flow(m)
    d = np.asarray(d, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if m.kind in (M.Kind.EUCLIDEAN, M.Kind.GAUSSIAN_SOLITON):
        return d * d / (4 * tau), d / (2 * tau), 1 / (2 * tau) + 0 * d, -d * d / (4 * tau * tau)
    if m.offset == 0.0:
        z = np.zeros(np.broadcast(d, tau).shape)
        return z + m.n / 2.0, z, z, z
    return _table(m)(d, tau)


def reduced_distance(m: M.ModelSpacetime, d, tau):
    """Reduced distance from the base point (0, 0) to a point at distance d, time tau."""
    return reduced_distance_derivatives(m, d, tau)[0]


def reduced_volume(m: M.ModelSpacetime, tau: float, tol: float = 1e-12) -> float:
    """int (4 pi tau)^{-n/2} exp(-ell) dmu over the slice at tau."""
    _require_flow(m)
    n = m.n
    dmax = float(M.max_distance(m, tau))
    if not math.isfinite(dmax):
        dmax = math.sqrt(4 * tau * 90.0)  # e^{-90} tail is far below tol
    pref = (4 * math.pi * tau) ** (-n / 2)

    def f(d):
        return pref * np.exp(-reduced_distance(m, d, tau)) * M.sphere_area(m, np.minimum(d, dmax), tau)

    return integrate_adaptive(f, (0.0, dmax), tol).value


def soliton_reduced_volume(m: M.ModelSpacetime) -> float:
    """Constant reduced volume of a shrinking soliton based at its vertex.

    1 for the Gaussian soliton; on the vertex-based shrinking sphere ell = n/2
    and the slice volume scales like tau^{n/2}, which gives
    ``((n-1)/(2 pi e))^{n/2} |S^n|``.
    """
    if m.kind is M.Kind.GAUSSIAN_SOLITON:
        return 1.0
    if m.kind is M.Kind.SHRINKING_SPHERE and m.offset == 0.0:
        n = m.n
        return ((n - 1) / (2 * math.pi * math.e)) ** (n / 2) * M.unit_sphere_area(n + 1)
    raise M.DomainError(f"{m.name} is not a soliton based at its vertex")
