"""Regenerate the frozen reference values used by the test-suite.

Every value here comes from a route that shares no code with the package:
arbitrary-precision series and quadratures in mpmath, closed-form
antiderivatives, and a finite-volume time stepper. Run with
``python tests/oracles/generate.py`` and paste the output into
``tests/oracles/values.py`` if anything needs refreshing.
"""
import mpmath as mp
import numpy as np
from scipy.linalg import solve_banded

mp.mp.dps = 30


def s2_kernel(theta, t):
    x = mp.cos(theta)
    tot = mp.mpf(0)
    l = 0
    while True:
        term = (2 * l + 1) / (4 * mp.pi) * mp.exp(-l * (l + 1) * t) * mp.legendre(l, x)
        tot += term
        if l > 10 and abs((2 * l + 1) * mp.exp(-l * (l + 1) * t)) < mp.mpf(10) ** -28:
            return tot
        l += 1


def s3_kernel(theta, t):
    tot = mp.mpf(0)
    l = 0
    while True:
        u = mp.sin((l + 1) * theta) / mp.sin(theta) if theta != 0 else mp.mpf(l + 1)
        term = (l + 1) / (2 * mp.pi ** 2) * mp.exp(-l * (l + 2) * t) * u
        tot += term
        if l > 10 and (l + 1) ** 2 * mp.exp(-l * (l + 2) * t) < mp.mpf(10) ** -28:
            return tot
        l += 1


def transplant_ratio_s2_flat(r):
    """r^-2 int int_{d < min(rho, pi)} d^2/(4 tau^2) 2 pi sin d  dd dtau, flat profile."""
    r = mp.mpf(r)
    tsup = r ** 2 / (4 * mp.pi)

    def inner(tau):
        rho = mp.sqrt(max(4 * tau * mp.log(r ** 2 / (4 * mp.pi * tau)), 0))
        a = min(rho, mp.pi)
        prim = -a ** 2 * mp.cos(a) + 2 * a * mp.sin(a) + 2 * mp.cos(a) - 2
        return 2 * mp.pi * prim / (4 * tau ** 2)

    return mp.quad(inner, [0, tsup / 1000, tsup / 10, tsup]) / r ** 2


def shrinking_action(n, offset, d, tau):
    """L of the radial Euler-Lagrange path, by quadrature of its action."""
    n, q, tau = mp.mpf(n), mp.mpf(offset), mp.mpf(tau)
    s1 = mp.sqrt(tau)
    # reference coordinate u measured in g(1); u' = v0 q / (s^2 + q)
    radius1 = mp.sqrt(2 * (n - 1) * (1 + q))
    radius_t = mp.sqrt(2 * (n - 1) * (tau + q))
    u_end = d * radius1 / radius_t
    v0 = u_end / (mp.sqrt(q) * mp.atan(s1 / mp.sqrt(q)))
    kin = mp.quad(lambda s: mp.mpf(1) / 2 * (s ** 2 + q) / (1 + q) * (v0 * q / (s ** 2 + q)) ** 2, [0, s1])
    curv = mp.quad(lambda s: 2 * s ** 2 * n / (2 * (s ** 2 + q)), [0, s1])
    return kin + curv


def shrinking_ell(n, offset, d, tau):
    return shrinking_action(n, offset, d, tau) / (2 * mp.sqrt(tau))


def shrinking_volume(n, offset, tau):
    n, tau = mp.mpf(n), mp.mpf(tau)
    R = mp.sqrt(2 * (n - 1) * (tau + offset))
    area = (lambda d: 2 * mp.pi * R * mp.sin(d / R)) if n == 2 else \
        (lambda d: 4 * mp.pi * (R * mp.sin(d / R)) ** 2)
    f = lambda d: (4 * mp.pi * tau) ** (-n / 2) * mp.exp(-shrinking_ell(n, offset, d, tau)) * area(d)
    return mp.quad(f, [0, mp.pi * R / 2, mp.pi * R])


def stepper_s2(theta_probe, t_end, t0=2e-4, cells=4000, steps=4000):
    """Crank-Nicolson finite volumes for u_t = (sin u_theta)_theta / sin on [0, pi].

    Starts from the leading small-time parametrix at t0.
    """
    h = np.pi / cells
    th = (np.arange(cells) + 0.5) * h
    faces = np.arange(cells + 1) * h
    vol = np.cos(faces[:-1]) - np.cos(faces[1:])
    u = (4 * np.pi * t0) ** -1 * np.exp(-th ** 2 / (4 * t0)) * np.sqrt(th / np.sin(th))
    u /= np.sum(u * vol) * 2 * np.pi
    flux = np.sin(faces[1:-1]) / h
    # tridiagonal operator (A u)_i = [flux_i (u_{i+1}-u_i) - flux_{i-1} (u_i-u_{i-1})] / vol_i
    sup = np.zeros(cells)
    sub = np.zeros(cells)
    diag = np.zeros(cells)
    diag[:-1] -= flux / vol[:-1]
    diag[1:] -= flux / vol[1:]
    sup[1:] = flux / vol[:-1]     # banded layout: sup[j] = A[j-1, j]
    sub[:-1] = flux / vol[1:]     # sub[j] = A[j+1, j]

    def apply(v):
        out = diag * v
        out[:-1] += sup[1:] * v[1:]
        out[1:] += sub[:-1] * v[:-1]
        return out

    # geometric steps resolve the fast early decay
    ts = t0 + (t_end - t0) * (np.geomspace(1, 1001, steps + 1) - 1) / 1000
    for dt in np.diff(ts):
        ab = -0.5 * dt * np.vstack([sup, diag, sub])
        ab[1] += 1.0
        u = solve_banded((1, 1), ab, u + 0.5 * dt * apply(u))
    return float(np.interp(theta_probe, th, u))


if __name__ == "__main__":
    print("S2_KERNEL = {")
    for th, t in [(0.0, 0.1), (0.5, 0.1), (1.0, 0.05), (0.3, 0.01), (3.0, 0.05), (2.0, 0.6), (mp.pi, 2.0)]:
        print(f"    ({float(th)!r}, {t!r}): {mp.nstr(s2_kernel(mp.mpf(th), mp.mpf(t)), 17)},")
    print("}")
    print("S3_KERNEL = {")
    for th, t in [(0.0, 0.1), (0.7, 0.2), (2.5, 0.05), (1.5, 1.0)]:
        print(f"    ({th!r}, {t!r}): {mp.nstr(s3_kernel(mp.mpf(th), mp.mpf(t)), 17)},")
    print("}")
    print("TRANSPLANT_RATIO_S2_FLAT = {")
    for r in [0.1, 0.3, 1.0, 2.0]:
        print(f"    {r!r}: {mp.nstr(transplant_ratio_s2_flat(r), 17)},")
    print("}")
    print("SHRINKING_ELL = {")
    for n, q, d, t in [(2, 0.1, 0.5, 0.3), (2, 0.1, 1.2, 1.0), (3, 0.1, 0.8, 0.6), (2, 0.5, 0.0, 0.4)]:
        print(f"    ({n}, {q!r}, {d!r}, {t!r}): {mp.nstr(shrinking_ell(n, q, mp.mpf(d), t), 17)},")
    print("}")
    print("SHRINKING_CENTER_ELL = {")
    for n, q, t in [(2, 0.1, 0.2), (3, 0.1, 1.0)]:
        val = mp.quad(lambda s: mp.sqrt(s) * n / (2 * (s + q)), [0, t]) / (2 * mp.sqrt(t))
        print(f"    ({n}, {q!r}, {t!r}): {mp.nstr(val, 17)},")
    print("}")
    print("SHRINKING_VOLUME = {")
    for n, q, t in [(2, 0.1, 0.1), (2, 0.1, 0.5), (2, 0.1, 1.0), (3, 0.1, 0.5)]:
        print(f"    ({n}, {q!r}, {t!r}): {mp.nstr(shrinking_volume(n, q, t), 17)},")
    print("}")
    print(f"S2_STEPPER_0p3_0p01 = {stepper_s2(0.3, 0.01)!r}")
