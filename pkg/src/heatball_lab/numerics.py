"""Numerical building blocks: quadrature, root finding, ODEs, path minimization,
and extrapolation to zero.

Everything here is deterministic: the same inputs produce bit-identical
outputs, so reports built on top of it can be diffed across runs.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _sp_integrate
from scipy import optimize as _sp_optimize

__all__ = [
    "QuadResult",
    "Trajectory",
    "DiscretePath",
    "Extrapolation",
    "NumericError",
    "QuadratureError",
    "BracketError",
    "StiffnessError",
    "ConditioningError",
    "QUAD_TOL",
    "ROOT_TOL",
    "integrate_adaptive",
    "integrate_batch",
    "find_root",
    "bisect_vectorized",
    "integrate_ode",
    "minimize_path_action",
    "extrapolate_to_zero",
    "pairwise_sum",
]

log = logging.getLogger(__name__)

QUAD_TOL = 1e-10
ROOT_TOL = 1e-12


class NumericError(RuntimeError):
    """Base class for numerical failures (CLI exit code 3)."""


class QuadratureError(NumericError):
    pass


class BracketError(NumericError):
    pass


class StiffnessError(NumericError):
    pass


class ConditioningError(NumericError):
    pass


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __float__(self) -> float:
        return self.value


@dataclass
class Trajectory:
    """ODE solution with dense output ``sol(t)``."""
    t: np.ndarray
    y: np.ndarray
    sol: Callable[[np.ndarray], np.ndarray]
    nfev: int


@dataclass
class DiscretePath:
    """Nodes ``u`` at parameters ``s``; endpoints are held fixed."""
    s: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.s.shape != self.u.shape or self.s.ndim != 1 or self.s.size < 3:
            raise ValueError("path needs matching 1-d node arrays with at least 3 nodes")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("path parameters must be strictly increasing")


@dataclass(frozen=True)
class Extrapolation:
    value: float
    error: float

    def __float__(self) -> float:
        return self.value


def pairwise_sum(values: Sequence[float]) -> float:
    """Pairwise (cascade) summation in the given order."""
    vals = [float(v) for v in values]
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


_GL_CACHE: dict = {}


def _gauss_legendre(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _gl_panel(f, a, b, order):
    x, w = _gauss_legendre(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = np.asarray(f(mid + half * x), dtype=float)
    return half * float(np.dot(w, vals))


def _gl_two_halves(f, a, b, order):
    # one vectorized call for both halves
    x, w = _gauss_legendre(order)
    m = 0.5 * (a + b)
    hl = 0.5 * (m - a)
    hr = 0.5 * (b - m)
    pts = np.concatenate([0.5 * (a + m) + hl * x, 0.5 * (m + b) + hr * x])
    vals = np.asarray(f(pts), dtype=float)
    k = x.size
    return hl * float(np.dot(w, vals[:k])), hr * float(np.dot(w, vals[k:]))


def integrate_adaptive(
    f: Callable[[np.ndarray], np.ndarray],
    iv: tuple[float, float],
    tol: float = QUAD_TOL,
    *,
    rel_tol: float = 0.0,
    order: int = 10,
    max_subdivisions: int = 5000,
    cluster_ends: bool = True,
) -> QuadResult:
    """Globally adaptive Gauss-Legendre quadrature on a finite interval.

    The integrand must accept a numpy array of abscissae. Interior nodes only
    are used, so integrable endpoint singularities of type
    ``x**a * log(x)**b`` (a > -1) are handled by repeated bisection toward the
    offending endpoint. The error estimate for a panel is the difference
    between its one-panel value and the sum of its two halves.

    Args:
        f: vectorized integrand.
        iv: finite interval ``(a, b)``.
        tol: absolute tolerance.
        rel_tol: relative tolerance; the target is ``max(tol, rel_tol*|I|)``.
        order: Gauss-Legendre points per panel.
        max_subdivisions: panel budget before giving up.
        cluster_ends: integrate in ``t`` with ``x = a + (b-a)*t*t*(3-2t)``,
            which turns ``(x-a)**alpha`` into roughly ``t**(2*alpha+1)`` at
            both ends. Harmless for smooth integrands.

    Returns:
        QuadResult with the pairwise-summed value.

    Raises:
        QuadratureError: when the budget is exhausted, with the worst panel.
    """
    a, b = float(iv[0]), float(iv[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integrate_adaptive needs a finite interval")
    if a == b:
        return QuadResult(0.0, 0.0, 0)
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    if cluster_ends:
        g = f
        width = b - a

        def f(t):
            t = np.asarray(t, dtype=float)
            x = a + width * (t * t * (3.0 - 2.0 * t))
            return np.asarray(g(x), dtype=float) * (6.0 * width * t * (1.0 - t))

        a, b = 0.0, 1.0

    whole = _gl_panel(f, a, b, order)
    left, right = _gl_two_halves(f, a, b, order)
    nfev = 3 * order
    err0 = abs(whole - (left + right))
    # leaves keyed by left endpoint; heap holds (-err, a) so ties break on position
    leaves = {a: (0.5 * (a + b), left, err0 / 2), 0.5 * (a + b): (b, right, err0 / 2)}
    heap = [(-err0 / 2, a), (-err0 / 2, 0.5 * (a + b))]
    heapq.heapify(heap)
    tiny = 64 * np.finfo(float).eps * max(abs(a), abs(b), b - a)
    err_total = err0
    running = left + right
    nsub = 1

    while True:
        target = max(tol, rel_tol * abs(running))
        if err_total <= target or not heap:
            value = pairwise_sum([leaves[k][1] for k in sorted(leaves)])
            return QuadResult(sign * value, err_total, nfev)
        if nsub >= max_subdivisions:
            worst = max(leaves.items(), key=lambda kv: kv[1][2])
            raise QuadratureError(
                f"adaptive quadrature did not converge on [{a}, {b}]: "
                f"estimate {running!r}, error {err_total:.3e} > {target:.3e}, "
                f"worst panel [{worst[0]}, {worst[1][0]}] err {worst[1][2]:.3e}"
            )
        _, lo = heapq.heappop(heap)
        hi, val, e_old = leaves[lo]
        if hi - lo <= tiny:
            # too narrow to split; its error stays in the total
            continue
        l_val, r_val = _gl_two_halves(f, lo, hi, order)
        nfev += 2 * order
        nsub += 1
        e = abs(val - (l_val + r_val)) / 2
        mid = 0.5 * (lo + hi)
        leaves[lo] = (mid, l_val, e)
        leaves[mid] = (hi, r_val, e)
        err_total += 2 * e - e_old
        running += l_val + r_val - val
        heapq.heappush(heap, (-e, lo))
        heapq.heappush(heap, (-e, mid))


def integrate_batch(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    order: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Gauss-Legendre over many intervals at once.

    ``f`` receives a 2-d array of shape ``(len(lo), 2*order)`` (row ``i``
    holds abscissae in ``[lo[i], hi[i]]``) and must return the same shape.
    Each row is integrated with a two-panel rule; the returned error is the
    difference to the same two panels at half the order.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = _gauss_legendre(order)
    mid = 0.5 * (lo + hi)[:, None]
    hl = 0.25 * (hi - lo)[:, None]
    pts = np.concatenate([mid - hl + hl * x, mid + hl + hl * x], axis=1)
    vals = np.asarray(f(pts), dtype=float)
    k = order
    halves = hl[:, 0] * (vals[:, :k] @ w + vals[:, k:] @ w)
    # coarse estimate from the lower-order rule on the same halves
    xo, wo = _gauss_legendre(order // 2)
    ptc = np.concatenate([mid - hl + hl * xo, mid + hl + hl * xo], axis=1)
    vc = np.asarray(f(ptc), dtype=float)
    kc = order // 2
    coarse = hl[:, 0] * (vc[:, :kc] @ wo + vc[:, kc:] @ wo)
    return halves, np.abs(halves - coarse)


def find_root(
    f: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = ROOT_TOL,
    *,
    max_iter: int = 200,
) -> float:
    """Brent's method on a sign-changing bracket.

    Raises:
        BracketError: if ``f`` has the same strict sign at both ends.
    """
    a, b = float(bracket[0]), float(bracket[1])
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise BracketError(f"non-finite value at bracket ends: f({a})={fa}, f({b})={fb}")
    if (fa > 0) == (fb > 0):
        raise BracketError(f"no sign change on [{a}, {b}]: f={fa!r}, {fb!r}")
    try:
        root, info = _sp_optimize.brentq(
            f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=max_iter,
            full_output=True, disp=False,
        )
    except RuntimeError as exc:  # pragma: no cover - brentq raises on maxiter with disp
        raise NumericError(str(exc)) from exc
    if not info.converged:
        raise NumericError(f"root finding did not converge on [{a}, {b}] ({info.flag})")
    return float(root)


def bisect_vectorized(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    iters: int = 64,
) -> np.ndarray:
    """Bisection on many brackets at once.

    Assumes ``f(lo) > 0 >= f(hi)`` elementwise (a decreasing crossing).
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(np.abs(hi), 1e-300)):
            break
    return 0.5 * (lo + hi)


def integrate_ode(
    field: Callable[[float, np.ndarray], np.ndarray],
    init: Sequence[float],
    span: tuple[float, float],
    tol: float = 1e-11,
) -> Trajectory:
    """Explicit high-order Runge-Kutta (DOP853) with dense output."""
    y0 = np.asarray(init, dtype=float)
    with np.errstate(divide="raise", invalid="raise", over="raise"):
        try:
            res = _sp_integrate.solve_ivp(
                field, span, y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                dense_output=True,
            )
        except FloatingPointError as exc:
            raise StiffnessError(f"floating point failure in ODE field: {exc}") from exc
    if res.status != 0:
        raise StiffnessError(f"ODE integration failed on {span}: {res.message}")
    return Trajectory(t=res.t, y=res.y, sol=res.sol, nfev=res.nfev)


def minimize_path_action(
    action: Callable[[DiscretePath], float],
    init: DiscretePath,
    tol: float = 1e-10,
    *,
    grad: Optional[Callable[[DiscretePath], np.ndarray]] = None,
    max_iter: int = 20000,
) -> tuple[DiscretePath, float]:
    """Minimize a discrete path action over the interior nodes.

    Endpoints of ``init`` stay fixed. ``grad`` (if given) returns the gradient
    with respect to all nodes; only interior entries are used.
    """
    s = init.s
    u0 = init.u.copy()

    def unpack(z):
        u = u0.copy()
        u[1:-1] = z
        return DiscretePath(s, u)

    def fun(z):
        return float(action(unpack(z)))

    jac = None
    if grad is not None:
        def jac(z):
            return np.asarray(grad(unpack(z)), dtype=float)[1:-1]

    start = fun(u0[1:-1])
    res = _sp_optimize.minimize(
        fun, u0[1:-1], jac=jac, method="L-BFGS-B",
        options={"maxiter": max_iter, "maxfun": 100 * max_iter, "ftol": tol * 1e-3, "gtol": tol, "maxcor": 30},
    )
    if not res.success:
        log.warning("path minimization stopped early: %s", res.message)
    best = unpack(res.x)
    val = fun(res.x)
    if val > start:
        return DiscretePath(s, u0), start
    return best, val


def extrapolate_to_zero(
    samples: Sequence[tuple[float, float]],
    order: int = 2,
) -> Extrapolation:
    """Estimate ``lim_{r->0} F(r)`` from samples ``(r, F(r))``.

    Fits a polynomial in ``r**2`` of degree ``order`` by least squares and
    reports the constant term. The error estimate is the change in the
    constant term when the degree drops by one.
    """
    pts = sorted((float(r), float(v)) for r, v in samples)
    if len(pts) < order + 2:
        raise ValueError(f"need at least {order + 2} samples for order {order}")
    r = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(r <= 0):
        raise ValueError("sample radii must be positive")
    x = r ** 2
    if np.min(np.diff(x)) <= 1e-12 * x.max():
        raise ConditioningError("sample radii too close together")
    xs = x / x.max()

    def const_term(deg):
        V = np.vander(xs, deg + 1, increasing=True)
        if np.linalg.cond(V) > 1e12:
            raise ConditioningError("ill-conditioned extrapolation design")
        c, *_ = np.linalg.lstsq(V, y, rcond=None)
        return float(c[0])

    hi = const_term(order)
    lo = const_term(order - 1) if order >= 1 else hi
    return Extrapolation(hi, abs(hi - lo))
