"""Rotationally symmetric model spacetimes.

All quantities are expressed in backward time ``tau`` and in the geodesic
distance ``d`` from the base point, measured in the metric at time ``tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Kind",
    "ModelSpacetime",
    "DomainError",
    "euclidean",
    "sphere",
    "hyperbolic3",
    "shrinking_sphere",
    "gaussian_soliton",
    "unit_sphere_area",
    "unit_ball_volume",
    "scalar_curvature",
    "ricci_coefficient",
    "trace_h",
    "sphere_area",
    "log_area_derivative",
    "max_distance",
    "metric_scale",
    "sphere_radius",
    "distance_at",
    "ricci_bounds",
    "is_ricci_flow",
    "volume",
]


class DomainError(ValueError):
    """Argument outside the model's domain."""


class Kind(str, Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    HYPERBOLIC3 = "hyperbolic3"
    SHRINKING_SPHERE = "shrinking_sphere"
    GAUSSIAN_SOLITON = "gaussian_soliton"


@dataclass(frozen=True)
class ModelSpacetime:
    kind: Kind
    n: int
    horizon: float = 1.0
    radius: float = 1.0  # static sphere radius
    offset: float = 0.0  # shrinking sphere time offset

    def __post_init__(self):
        k = Kind(self.kind)
        object.__setattr__(self, "kind", k)
        allowed = {
            Kind.EUCLIDEAN: (1, 2, 3),
            Kind.GAUSSIAN_SOLITON: (1, 2, 3),
            Kind.SPHERE: (2, 3),
            Kind.SHRINKING_SPHERE: (2, 3),
            Kind.HYPERBOLIC3: (3,),
        }[k]
        if self.n not in allowed:
            raise DomainError(f"{k.value} needs n in {allowed}, got {self.n}")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if k is Kind.SPHERE and not self.radius > 0:
            raise DomainError("sphere radius must be positive")
        if k is Kind.SHRINKING_SPHERE and not self.offset >= 0:
            raise DomainError("shrinking sphere offset must be >= 0")

    @property
    def name(self) -> str:
        if self.kind is Kind.SPHERE:
            return f"sphere(n={self.n}, radius={self.radius:g})"
        if self.kind is Kind.SHRINKING_SPHERE:
            return f"shrinking_sphere(n={self.n}, offset={self.offset:g})"
        return f"{self.kind.value}(n={self.n})"


def euclidean(n: int, horizon: float = 1.0) -> ModelSpacetime:
    return ModelSpacetime(Kind.EUCLIDEAN, n, horizon)


def sphere(n: int, radius: float = 1.0, horizon: float = 1.0) -> ModelSpacetime:
    return ModelSpacetime(Kind.SPHERE, n, horizon, radius=radius)


def hyperbolic3(horizon: float = 1.0) -> ModelSpacetime:
    return ModelSpacetime(Kind.HYPERBOLIC3, 3, horizon)


def shrinking_sphere(n: int, offset: float, horizon: float = 1.0) -> ModelSpacetime:
    return ModelSpacetime(Kind.SHRINKING_SPHERE, n, horizon, offset=offset)


def gaussian_soliton(n: int, horizon: float = 1.0) -> ModelSpacetime:
    return ModelSpacetime(Kind.GAUSSIAN_SOLITON, n, horizon)


def unit_sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n (2 for n=1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def is_ricci_flow(m: ModelSpacetime) -> bool:
    """True when the metric evolves by (backward) Ricci flow, h = -Rc.

    The flat models count: the static flat metric is a trivial Ricci flow.
    """
    return m.kind in (Kind.SHRINKING_SPHERE, Kind.GAUSSIAN_SOLITON, Kind.EUCLIDEAN)


def sphere_radius(m: ModelSpacetime, tau=0.0):
    """Radius of the round sphere at time tau (spheres only)."""
    if m.kind is Kind.SPHERE:
        return m.radius + 0.0 * np.asarray(tau, dtype=float)
    if m.kind is Kind.SHRINKING_SPHERE:
        return np.sqrt(2.0 * (m.n - 1) * (np.asarray(tau, dtype=float) + m.offset))
    raise DomainError(f"{m.name} is not a sphere")


def ricci_coefficient(m: ModelSpacetime, tau=0.0):
    """lambda with Rc = lambda * g (every model here is Einstein)."""
    tau = np.asarray(tau, dtype=float)
    if m.kind in (Kind.EUCLIDEAN, Kind.GAUSSIAN_SOLITON):
        return np.zeros_like(tau)
    if m.kind is Kind.SPHERE:
        return (m.n - 1) / m.radius ** 2 + 0.0 * tau
    if m.kind is Kind.HYPERBOLIC3:
        return -2.0 + 0.0 * tau
    with np.errstate(divide="ignore"):  # the vertex at tau + offset = 0 is infinitely curved
        return 1.0 / (2.0 * (tau + m.offset))


def scalar_curvature(m: ModelSpacetime, tau=0.0):
    return m.n * ricci_coefficient(m, tau)


def trace_h(m: ModelSpacetime, tau=0.0):
    """tr_g of the metric variation in backward time: -R on Ricci flows, 0 if static."""
    if m.kind is Kind.SHRINKING_SPHERE:
        return -scalar_curvature(m, tau)
    return np.zeros_like(np.asarray(tau, dtype=float))


def max_distance(m: ModelSpacetime, tau=0.0):
    """Largest geodesic distance from the base point at time tau."""
    if m.kind in (Kind.SPHERE, Kind.SHRINKING_SPHERE):
        return math.pi * sphere_radius(m, tau)
    return np.inf + 0.0 * np.asarray(tau, dtype=float)


def metric_scale(m: ModelSpacetime, tau=0.0):
    """Length scale of g(tau) relative to the reference slice (tau = 1)."""
    tau = np.asarray(tau, dtype=float)
    if m.kind is Kind.SHRINKING_SPHERE:
        return np.sqrt((tau + m.offset) / (1.0 + m.offset))
    return np.ones_like(tau)


def distance_at(m: ModelSpacetime, d, tau_from, tau_to):
    """Distance at time tau_to between the same two points that are d apart at tau_from."""
    return np.asarray(d, dtype=float) * metric_scale(m, tau_to) / metric_scale(m, tau_from)


def _check_d(m, d, tau):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be nonnegative")
    dmax = max_distance(m, tau)
    if np.any(d > dmax * (1 + 1e-12)):
        raise DomainError(f"distance exceeds {m.name} diameter")
    return d


def sphere_area(m: ModelSpacetime, d, tau=0.0):
    """Area of the geodesic sphere of radius d about the base point."""
    d = _check_d(m, d, tau)
    n = m.n
    w = unit_sphere_area(n)
    if m.kind in (Kind.EUCLIDEAN, Kind.GAUSSIAN_SOLITON):
        return w * d ** (n - 1)
    if m.kind is Kind.HYPERBOLIC3:
        return w * np.sinh(d) ** 2
    R = sphere_radius(m, tau)
    return w * (R * np.sin(np.minimum(d / R, math.pi))) ** (n - 1)


def log_area_derivative(m: ModelSpacetime, d, tau=0.0):
    """d/dd log sphere_area: the mean curvature of distance spheres.

    Singular at d = 0 (and at the antipode on spheres); callers combine it with
    a vanishing radial derivative there.
    """
    d = np.asarray(d, dtype=float)
    n = m.n
    with np.errstate(divide="ignore", invalid="ignore"):
        if m.kind in (Kind.EUCLIDEAN, Kind.GAUSSIAN_SOLITON):
            return (n - 1) / d
        if m.kind is Kind.HYPERBOLIC3:
            return 2.0 / np.tanh(d)
        R = sphere_radius(m, tau)
        return (n - 1) / (R * np.tan(d / R))


def volume(m: ModelSpacetime, tau=0.0) -> float:
    """Total volume (finite only on spheres)."""
    if m.kind in (Kind.SPHERE, Kind.SHRINKING_SPHERE):
        R = float(sphere_radius(m, tau))
        return unit_sphere_area(m.n + 1) * R ** m.n
    return math.inf


def ricci_bounds(m: ModelSpacetime, tau_lo: float = 0.0, tau_hi: float | None = None) -> tuple[float, float]:
    """Smallest (k, K) >= 0 with -k g <= Rc <= K g on the time window."""
    if tau_hi is None:
        tau_hi = m.horizon
    if tau_hi < tau_lo:
        raise DomainError("empty time window")
    lam = np.array([ricci_coefficient(m, tau_lo), ricci_coefficient(m, tau_hi)], dtype=float)
    # lambda is monotone in tau for every model, so the endpoints suffice
    k = max(0.0, float(-lam.min()))
    K = max(0.0, float(lam.max()))
    return k, K
