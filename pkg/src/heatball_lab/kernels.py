"""Radial backward kernels and their log-derivatives.

A kernel here is a positive function Psi(d, tau) of the distance d from the
base point and backward time tau, singular at (0, 0). Evaluators return
``psi = log Psi`` together with ``d psi/dd``, ``d^2 psi/dd^2`` and the
tau-derivative at a fixed spatial point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models as M
from . import reduced_geometry as RG
from .numerics import NumericError

__all__ = [
    "KernelValues",
    "KernelField",
    "TruncationError",
    "HypothesisError",
    "euclidean_backward_kernel",
    "sphere_spectral_kernel",
    "hyperbolic3_kernel",
    "transplant_kernel",
    "reduced_volume_density",
    "conjugate_pde_residual",
    "euclidean_field",
    "sphere_field",
    "hyperbolic3_field",
    "transplant_field",
    "reduced_volume_field",
    "default_field",
]

SPECTRAL_CAP = 10_000
# below this (unit-sphere) time the image representation is used
IMAGE_SWITCH = 0.5


class TruncationError(NumericError):
    pass


class HypothesisError(ValueError):
    """A curvature or model hypothesis required by a kernel does not hold."""


@dataclass
class KernelValues:
    psi: np.ndarray
    psi_d: np.ndarray
    psi_dd: np.ndarray
    psi_tau: np.ndarray

    @property
    def kernel(self) -> np.ndarray:
        return np.exp(self.psi)


def _bcast(d, tau):
    d, tau = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(tau, dtype=float))
    if np.any(tau <= 0):
        raise M.DomainError("kernels are defined for tau > 0")
    return d, tau


# -- Euclidean -------------------------------------------------------------

def euclidean_backward_kernel(n: int, d, tau) -> KernelValues:
    d, tau = _bcast(d, tau)
    psi = -0.5 * n * np.log(4 * math.pi * tau) - d * d / (4 * tau)
    return KernelValues(psi, -d / (2 * tau), -0.5 / tau + 0 * d,
                        -0.5 * n / tau + d * d / (4 * tau * tau))


# -- hyperbolic 3-space ------------------------------------------------------

def hyperbolic3_kernel(d, tau) -> KernelValues:
    """Closed-form heat kernel of H^3 (curvature -1)."""
    d, tau = _bcast(d, tau)
    small = d < 1e-4
    ds = np.where(small, 1.0, d)
    d2 = d * d
    # log(d/sinh d) and derivatives, with a Taylor branch near the pole
    g = np.where(small, -d2 / 6 + d2 * d2 / 180, np.log(ds / np.sinh(ds)))
    g1 = np.where(small, -d / 3 + d * d2 / 45, 1 / ds - 1 / np.tanh(ds))
    g2 = np.where(small, -1 / 3 + d2 / 15, -1 / ds ** 2 + 1 / np.sinh(ds) ** 2)
    psi = -1.5 * np.log(4 * math.pi * tau) + g - d2 / (4 * tau) - tau
    return KernelValues(psi, g1 - d / (2 * tau), g2 - 0.5 / tau,
                        -1.5 / tau + d2 / (4 * tau * tau) - 1.0)


# -- spheres -----------------------------------------------------------------

def _spectral_order(n, t_min, tol):
    """Smallest L past which the (second-derivative weighted) terms are below tol."""
    base = 1.0 / (4 * math.pi) if n == 2 else 1.0 / (2 * math.pi ** 2)
    l = 1
    while True:
        lam = l * (l + n - 1)
        c = (2 * l + 1) / (4 * math.pi) if n == 2 else (l + 1) ** 2 / (2 * math.pi ** 2)
        bound = c * (lam + 1) ** 2 * math.exp(-lam * t_min)
        if l * l * t_min > 1 and bound < tol * base * 1e-2:
            return l
        if l >= SPECTRAL_CAP:
            need = int(math.ceil(math.sqrt(max(math.log(1 / (tol * 1e-2)) + 8 * math.log(SPECTRAL_CAP), 1.0) / t_min)))
            raise TruncationError(
                f"spectral series needs about {need} terms at tau={t_min:g} "
                f"(cap {SPECTRAL_CAP}); use the image representation or a larger tau"
            )
        l += 1


def _sphere_spectral_unit(n, theta, t, tol):
    """log K and its theta, theta-theta and t derivatives on the unit S^n."""
    x = np.cos(theta)
    st = np.sin(theta)
    L = _spectral_order(n, float(np.min(t)), tol)
    K = np.zeros_like(theta)
    Kx = np.zeros_like(theta)
    Kxx = np.zeros_like(theta)
    Kt = np.zeros_like(theta)
    # f_l, f_l', f_l'' in x (Legendre for n=2, Chebyshev U for n=3)
    f_prev, f = np.zeros_like(x), np.ones_like(x)
    d_prev, df = np.zeros_like(x), np.zeros_like(x)
    dd_prev, ddf = np.zeros_like(x), np.zeros_like(x)
    for l in range(L + 1):
        lam = l * (l + n - 1)
        if n == 2:
            c = (2 * l + 1) / (4 * math.pi)
        else:
            c = (l + 1) / (2 * math.pi ** 2)
        e = c * np.exp(-lam * t)
        K += e * f
        Kx += e * df
        Kxx += e * ddf
        Kt -= lam * e * f
        if n == 2:
            f_next = ((2 * l + 1) * x * f - l * f_prev) / (l + 1)
            d_next = d_prev + (2 * l + 1) * f
            dd_next = dd_prev + (2 * l + 1) * df
        else:
            f_next = 2 * x * f - f_prev
            d_next = 2 * f + 2 * x * df - d_prev
            dd_next = 4 * df + 2 * x * ddf - dd_prev
        f_prev, f = f, f_next
        d_prev, df = df, d_next
        dd_prev, ddf = ddf, dd_next
    base = 1.0 / (4 * math.pi) if n == 2 else 1.0 / (2 * math.pi ** 2)
    if np.any(K <= 1e4 * tol * base):
        raise TruncationError(
            f"series value {float(K.min()):.3g} is below its absolute accuracy; "
            "use the image representation"
        )
    Kth = -st * Kx
    Kthth = st * st * Kxx - x * Kx
    lk = np.log(K)
    p1 = Kth / K
    return lk, p1, Kthth / K - p1 * p1, Kt / K


def _pair(z, b, t, shift):
    """[h(z+b) + h(z-b)] / z * exp(shift), h(y) = y exp(-y^2/4t), stable as z -> 0."""
    A = np.exp(shift - (z - b) ** 2 / (4 * t))
    B = np.exp(shift - (z + b) ** 2 / (4 * t))
    x = z * b / (2 * t)
    with np.errstate(invalid="ignore", divide="ignore"):
        E = np.where(x > 1e-12, -np.expm1(-2 * x) / (2 * x), 1.0 - x)
    return A + B - (b * b / t) * A * E


_IMAGE_NODES = np.polynomial.legendre.leggauss(64)


def _window(lo, hi):
    x, w = _IMAGE_NODES
    half = 0.5 * (hi - lo)
    return (0.5 * (hi + lo))[:, None] + half[:, None] * x, half[:, None] * w


def _s2_image_logK(theta, t):
    """log K on the unit 2-sphere from the image integral (any t > 0)."""
    # work with eta = pi - theta so the antipodal factor keeps full precision
    eta = np.maximum(math.pi - np.clip(theta, 0.0, math.pi), 1e-12)
    theta = math.pi - eta
    V = np.sqrt(eta * (2 * math.pi - eta))
    a_hi = np.minimum(V, np.sqrt(4 * t * 46.0))
    phi_lo = 2 * math.pi - np.sqrt(math.pi ** 2 + 184.0 * t)
    v_lo = np.sqrt(np.maximum(phi_lo ** 2 - theta ** 2, 0.0))
    b_lo = np.minimum(np.maximum(a_hi, v_lo), V)
    th = theta[:, None]
    tt = t[:, None]
    shift = th ** 2 / (4 * tt)
    total = np.zeros_like(theta)
    for lo, hi in ((np.zeros_like(theta), a_hi), (b_lo, V)):
        v, w = _window(lo, hi)
        phi = np.sqrt(th ** 2 + v ** 2)
        G = np.exp(-v ** 2 / (4 * tt))
        for k in range(1, 4):
            G = G + (-1) ** k * _pair(phi, 2 * math.pi * k, tt, shift)
        ssum = phi + th
        # c = 2 (cos theta - cos phi) / v^2 as a product of two stable sinc-like factors
        eta_phi = (V[:, None] - v) * (V[:, None] + v) / (math.pi + phi)
        c = np.sin(0.5 * (eta[:, None] + eta_phi)) / (0.5 * ssum) * np.sinc(v ** 2 / (2 * ssum) / math.pi)
        total += np.sum(w * G / np.sqrt(c), axis=1)
    return (math.log(2.0) + t / 4 - 1.5 * np.log(4 * math.pi * t)
            - theta ** 2 / (4 * t) + np.log(total))


def _s3_image_logK(theta, t):
    """log K on the unit 3-sphere from the closed-form image sum."""
    theta = np.clip(theta, 0.0, math.pi)
    out = np.empty_like(theta)
    near = theta <= math.pi / 2
    if np.any(near):
        th, tt = theta[near], t[near]
        s = np.ones_like(th)
        for k in range(1, 4):
            s = s + _pair(th, 2 * math.pi * k, tt, th ** 2 / (4 * tt))
        ratio = np.where(th > 1e-8, th / np.sin(np.maximum(th, 1e-300)), 1.0)
        out[near] = np.log(s * ratio) - th ** 2 / (4 * tt)
    far = ~near
    if np.any(far):
        th, tt = theta[far], t[far]
        eta = math.pi - th
        s = np.zeros_like(th)
        for j in range(0, 4):
            s = s - _pair(eta, math.pi * (2 * j + 1), tt, th ** 2 / (4 * tt))
        ratio = np.where(eta > 1e-8, eta / np.sin(np.maximum(eta, 1e-300)), 1.0)
        out[far] = np.log(s * ratio) - th ** 2 / (4 * tt)
    return out + t - 1.5 * np.log(4 * math.pi * t)


def _reflect(theta):
    theta = np.abs(theta)
    return np.where(theta > math.pi, 2 * math.pi - theta, theta)


def _image_values(n, theta, t):
    f = _s2_image_logK if n == 2 else _s3_image_logK
    h = 2e-3 * np.minimum(np.sqrt(t), 1.0)
    lk = f(theta, t)
    fp1, fm1 = f(_reflect(theta + h), t), f(_reflect(theta - h), t)
    fp2, fm2 = f(_reflect(theta + 2 * h), t), f(_reflect(theta - 2 * h), t)
    d1 = (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h)
    d2 = (16 * (fp1 + fm1) - (fp2 + fm2) - 30 * lk) / (12 * h * h)
    ht = 1e-3 * t
    dt = (8 * (f(theta, t + ht) - f(theta, t - ht)) - (f(theta, t + 2 * ht) - f(theta, t - 2 * ht))) / (12 * ht)
    return lk, d1, d2, dt


def sphere_spectral_kernel(radius: float, n: int, d, tau, tol: float = 1e-12,
                           method: str = "auto") -> KernelValues:
    """Heat kernel of the round n-sphere (n = 2, 3) of the given radius.

    ``method="spectral"`` forces the eigenfunction series and refuses when the
    truncation order would exceed the cap. ``"images"`` uses the image
    representation (exact image integral on S^2, closed-form image sum on
    S^3), whose spatial derivatives are taken by 5-point differences.
    ``"auto"`` picks the series for scaled times >= 0.5 and images below.
    """
    if n not in (2, 3):
        raise M.DomainError("sphere kernels exist for n = 2, 3")
    d, tau = _bcast(d, tau)
    shape = d.shape
    theta = (d / radius).ravel()
    if np.any(theta > math.pi * (1 + 1e-12)) or np.any(theta < 0):
        raise M.DomainError("distance outside [0, pi*radius]")
    theta = np.minimum(theta, math.pi)
    t = (tau / radius ** 2).ravel()
    out = [np.empty_like(theta) for _ in range(4)]
    if method == "spectral":
        use_spec = np.ones(theta.shape, bool)
    elif method == "images":
        use_spec = np.zeros(theta.shape, bool)
    elif method == "auto":
        use_spec = t >= IMAGE_SWITCH
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(use_spec):
        vals = _sphere_spectral_unit(n, theta[use_spec], t[use_spec], tol)
        for o, v in zip(out, vals):
            o[use_spec] = v
    if np.any(~use_spec):
        vals = _image_values(n, theta[~use_spec], t[~use_spec])
        for o, v in zip(out, vals):
            o[~use_spec] = v
    lk, p1, p2, pt = (o.reshape(shape) for o in out)
    return KernelValues(lk - n * math.log(radius), p1 / radius, p2 / radius ** 2, pt / radius ** 2)


# -- kernel fields -------------------------------------------------------------

class KernelField:
    """A kernel bound to a model spacetime."""

    label = "kernel"
    exact = True       # solves the conjugate heat equation exactly
    reduced = False    # built from a reduced distance
    fundamental = True  # unit-mass fundamental solution based at the origin

    def __init__(self, model: M.ModelSpacetime):
        self.model = model
        self.n = model.n

    def values(self, d, tau) -> KernelValues:  # pragma: no cover - abstract
        raise NotImplementedError

    def psi(self, d, tau) -> np.ndarray:
        return self.values(d, tau).psi

    def scaled(self, factor: float) -> "KernelField":
        return _Scaled(self, factor)

    def shifted(self, delta: float) -> "KernelField":
        return _Shifted(self, delta)

    def __repr__(self):
        return f"{self.label}[{self.model.name}]"


class _Euclidean(KernelField):
    label = "euclidean"

    def values(self, d, tau):
        return euclidean_backward_kernel(self.n, d, tau)

    def psi(self, d, tau):
        d, tau = _bcast(d, tau)
        return -0.5 * self.n * np.log(4 * math.pi * tau) - d * d / (4 * tau)


class _Sphere(KernelField):
    label = "sphere"

    def __init__(self, model, tol=1e-12, method="auto"):
        super().__init__(model)
        self.tol = tol
        self.method = method

    def values(self, d, tau):
        return sphere_spectral_kernel(self.model.radius, self.n, d, tau, self.tol, self.method)

    def psi(self, d, tau):
        d, tau = _bcast(d, tau)
        rad = self.model.radius
        theta = np.minimum(d / rad, math.pi).ravel()
        t = (tau / rad ** 2).ravel()
        out = np.empty_like(theta)
        spec = t >= IMAGE_SWITCH if self.method == "auto" else np.full(t.shape, self.method == "spectral")
        if np.any(spec):
            out[spec] = _sphere_spectral_unit(self.n, theta[spec], t[spec], self.tol)[0]
        if np.any(~spec):
            f = _s2_image_logK if self.n == 2 else _s3_image_logK
            out[~spec] = f(theta[~spec], t[~spec])
        return out.reshape(d.shape) - self.n * math.log(rad)


class _Hyperbolic(KernelField):
    label = "hyperbolic3"

    def values(self, d, tau):
        return hyperbolic3_kernel(d, tau)


class _Transplant(KernelField):
    label = "transplant"
    exact = False
    fundamental = False

    def __init__(self, model, k):
        super().__init__(model)
        self.k = k
        if k == 0:
            self.profile = lambda d, tau: euclidean_backward_kernel(self.n, d, tau)
        elif k == 1:
            self.profile = lambda d, tau: sphere_spectral_kernel(1.0, self.n, d, tau)
        else:
            self.profile = lambda d, tau: hyperbolic3_kernel(d, tau)

    def values(self, d, tau):
        d, tau = _bcast(d, tau)
        if self.k == 1 and np.any(d > math.pi * (1 + 1e-12)):
            raise M.DomainError("distance beyond the comparison sphere's diameter")
        return self.profile(np.minimum(d, math.pi) if self.k == 1 else d, tau)

    def __repr__(self):
        return f"transplant(k={self.k})[{self.model.name}]"


class _Reduced(KernelField):
    label = "reduced_volume"
    reduced = True

    def __init__(self, model):
        super().__init__(model)
        # exact on the flat models and on the vertex-origin shrinking sphere
        self.exact = not (model.kind is M.Kind.SHRINKING_SPHERE and model.offset > 0)
        # on the shrinking sphere the density is based at the vertex, not at a point
        self.fundamental = model.kind is not M.Kind.SHRINKING_SPHERE

    def values(self, d, tau):
        return reduced_volume_density(self.model, d, tau)

    def ell(self, d, tau):
        return RG.reduced_distance_derivatives(self.model, d, tau)


class _Scaled(KernelField):
    def __init__(self, base, factor):
        super().__init__(base.model)
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        self.base = base
        self.shift = math.log(factor)
        self.exact = base.exact
        self.fundamental = base.fundamental and self.shift == 0.0
        self.label = base.label + "*c"

    def values(self, d, tau):
        v = self.base.values(d, tau)
        return KernelValues(v.psi + self.shift, v.psi_d, v.psi_dd, v.psi_tau)

    def psi(self, d, tau):
        return self.base.psi(d, tau) + self.shift


class _Shifted(KernelField):
    """Psi(d, tau + delta): a bounded solution on static models."""

    def __init__(self, base, delta):
        super().__init__(base.model)
        if M.trace_h(base.model, 1.0) != 0 or base.model.kind is M.Kind.SHRINKING_SPHERE:
            raise HypothesisError("time shifts are only solutions on static models")
        self.base = base
        self.delta = float(delta)
        self.exact = base.exact
        self.fundamental = False
        self.label = base.label + "+dt"

    def values(self, d, tau):
        return self.base.values(d, np.asarray(tau, dtype=float) + self.delta)

    def psi(self, d, tau):
        return self.base.psi(d, np.asarray(tau, dtype=float) + self.delta)


def euclidean_field(model: M.ModelSpacetime) -> KernelField:
    if model.kind not in (M.Kind.EUCLIDEAN, M.Kind.GAUSSIAN_SOLITON):
        raise HypothesisError(f"the Euclidean kernel needs a flat model, got {model.name}")
    return _Euclidean(model)


def sphere_field(model: M.ModelSpacetime, tol: float = 1e-12, method: str = "auto") -> KernelField:
    if model.kind is not M.Kind.SPHERE:
        raise HypothesisError(f"the sphere kernel needs a static sphere, got {model.name}")
    return _Sphere(model, tol, method)


def hyperbolic3_field(model: M.ModelSpacetime) -> KernelField:
    if model.kind is not M.Kind.HYPERBOLIC3:
        raise HypothesisError(f"the H^3 kernel needs the hyperbolic model, got {model.name}")
    return _Hyperbolic(model)


def transplant_field(model: M.ModelSpacetime, k: int) -> KernelField:
    """Model-space kernel of constant curvature k in {-1, 0, 1} transplanted by distance.

    Requires a static target with Rc >= (n-1) k g.
    """
    if k not in (-1, 0, 1):
        raise ValueError("k must be -1, 0 or 1")
    if model.kind is M.Kind.SHRINKING_SPHERE:
        raise HypothesisError("transplanting needs a static target metric")
    if k == -1 and model.n != 3:
        raise HypothesisError("the k=-1 comparison kernel is available for n=3 only")
    lam_min = float(np.min(M.ricci_coefficient(model, np.array([0.0, model.horizon]))))
    if lam_min < (model.n - 1) * k - 1e-12:
        raise HypothesisError(
            f"{model.name} has Rc = {lam_min:g} g, below the required {(model.n - 1) * k} g"
        )
    return _Transplant(model, k)


def reduced_volume_field(model: M.ModelSpacetime) -> KernelField:
    if not M.is_ricci_flow(model):
        raise HypothesisError(f"{model.name} is not a Ricci flow")
    return _Reduced(model)


def default_field(model: M.ModelSpacetime) -> KernelField:
    """The natural kernel of each model."""
    k = model.kind
    if k in (M.Kind.EUCLIDEAN,):
        return _Euclidean(model)
    if k is M.Kind.SPHERE:
        return _Sphere(model)
    if k is M.Kind.HYPERBOLIC3:
        return _Hyperbolic(model)
    return _Reduced(model)


def transplant_kernel(k: int, model: M.ModelSpacetime, d, tau) -> KernelValues:
    return transplant_field(model, k).values(d, tau)


def reduced_volume_density(model: M.ModelSpacetime, d, tau) -> KernelValues:
    """v = (4 pi tau)^{-n/2} exp(-ell) in log form."""
    d, tau = _bcast(d, tau)
    ell, l_d, l_dd, l_t = RG.reduced_distance_derivatives(model, d, tau)
    n = model.n
    return KernelValues(-0.5 * n * np.log(4 * math.pi * tau) - ell, -l_d, -l_dd,
                        -0.5 * n / tau - l_t)


def conjugate_pde_residual(kf: KernelField, d, tau) -> np.ndarray:
    """(d/dtau - Laplacian - tr h) Psi / Psi on the kernel's model.

    Zero for exact kernels; a subsolution has residual <= 0.
    """
    d, tau = _bcast(d, tau)
    m = kf.model
    v = kf.values(d, tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        mc = M.log_area_derivative(m, d, tau)
        drift = mc * v.psi_d
    dmax = M.max_distance(m, tau)
    degenerate = (d < 1e-12) | (np.abs(d - dmax) < 1e-12 * np.maximum(dmax, 1.0))
    drift = np.where(degenerate, (m.n - 1) * v.psi_dd, drift)
    lap = v.psi_dd + v.psi_d ** 2 + drift
    return v.psi_tau - lap - M.trace_h(m, tau)
