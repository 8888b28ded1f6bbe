import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatball_lab import kernels as K
from heatball_lab.numerics import (
    BracketError,
    ConditioningError,
    DiscretePath,
    QuadratureError,
    bisect_vectorized,
    extrapolate_to_zero,
    find_root,
    integrate_adaptive,
    integrate_batch,
    integrate_ode,
    minimize_path_action,
    pairwise_sum,
)
from tests.oracles import values as V


def test_polynomial():
    res = integrate_adaptive(lambda x: x * x, (0.0, 1.0))
    assert res.value == pytest.approx(1 / 3, abs=1e-15)
    assert res.abs_error_estimate >= 0
    assert res.evaluations >= 1


def test_log_endpoint():
    res = integrate_adaptive(lambda x: np.log(1 / x), (0.0, 1.0), 1e-12)
    assert res.value == pytest.approx(1.0, abs=1e-10)


def test_singular_power_log():
    # int_0^1 x^-1/2 log(x)^2 dx = 16
    res = integrate_adaptive(lambda x: x ** -0.5 * np.log(x) ** 2, (0.0, 1.0), 1e-10)
    assert res.value == pytest.approx(16.0, abs=1e-8)


def test_soliton_density_log_integrand():
    tstar = 1 / (4 * math.pi * math.e)
    res = integrate_adaptive(lambda t: -8 * math.pi * np.log(4 * math.pi * math.e * t), (0.0, tstar), 1e-13)
    assert res.value == pytest.approx(V.SOLITON_LOG_INTEGRAL, abs=1e-11)


def test_reversed_interval_flips_sign():
    a = integrate_adaptive(np.cos, (0.0, 1.0)).value
    b = integrate_adaptive(np.cos, (1.0, 0.0)).value
    assert a == -b


def test_quadrature_budget_error():
    with pytest.raises(QuadratureError, match="worst panel"):
        integrate_adaptive(lambda x: np.sin(1 / x) / x, (0.0, 1.0), 1e-14, max_subdivisions=20)


def test_batch_matches_adaptive():
    lo = np.array([0.0, 1.0, 2.0])
    hi = np.array([1.0, 3.0, 2.5])
    vals, errs = integrate_batch(np.exp, lo, hi)
    np.testing.assert_allclose(vals, np.exp(hi) - np.exp(lo), rtol=1e-14)
    assert np.all(errs >= 0)


@given(st.integers(min_value=0, max_value=19))
def test_gauss_exactness(k):
    res = integrate_adaptive(lambda x: x ** k, (0.0, 1.0), cluster_ends=False)
    assert res.value == pytest.approx(1 / (k + 1), rel=1e-14)


def test_determinism():
    f = lambda x: np.exp(-x) * np.sqrt(x)
    assert integrate_adaptive(f, (0, 3)).value == integrate_adaptive(f, (0, 3)).value


def test_pairwise_sum_fixed_order():
    vals = [1e16, 1.0, -1e16, 1.0]
    assert pairwise_sum(vals) == pairwise_sum(list(vals))
    assert pairwise_sum([]) == 0.0


def test_roots():
    assert find_root(lambda x: x * x - 2, (1.0, 2.0)) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert find_root(lambda x: x, (-1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_heatball_lifetime_root():
    kf = K.euclidean_field(__import__("heatball_lab.models", fromlist=["x"]).euclidean(2))
    tau = find_root(lambda t: float(kf.psi(0.0, t)), (0.01, 0.5))
    assert tau == pytest.approx(1 / (4 * math.pi), abs=1e-12)


def test_bracket_error():
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1, (-1.0, 1.0))


def test_bisect_vectorized():
    c = np.array([1.0, 2.0, 5.0])
    x = bisect_vectorized(lambda x: c - x * x, np.zeros(3), np.full(3, 3.0))
    np.testing.assert_allclose(x, np.sqrt(c), rtol=1e-14)


def test_ode():
    tr = integrate_ode(lambda t, y: y, [1.0], (0.0, 1.0))
    assert tr.sol(1.0)[0] == pytest.approx(math.e, rel=1e-10)
    tr = integrate_ode(lambda t, y: 0 * y, [3.5], (0.0, 2.0))
    assert tr.sol(1.3)[0] == 3.5


def test_ode_straight_line():
    # flat radial Euler-Lagrange system: u'' = 0
    v0 = 0.7
    tr = integrate_ode(lambda s, y: np.array([y[1], 0.0]), [0.0, v0], (0.0, 2.0))
    s = np.linspace(0, 2, 9)
    np.testing.assert_allclose(tr.sol(s)[0], v0 * s, atol=1e-12)


def test_minimize_flat_action():
    s = np.linspace(0.0, 1.0, 41)
    init = DiscretePath(s, np.sqrt(s))  # a bent path with the right endpoints

    def action(p):
        du = np.diff(p.u) / np.diff(p.s)
        return 0.5 * float(np.sum(du ** 2 * np.diff(p.s)))

    path, L = minimize_path_action(action, init, 1e-12)
    assert L == pytest.approx(0.5, abs=1e-8)
    assert L / 2 == pytest.approx(0.25, abs=1e-8)
    assert L <= action(init)


def test_extrapolation():
    rs = [0.1, 0.2, 0.3, 0.4, 0.5]
    assert extrapolate_to_zero([(r, 3 + r * r) for r in rs]).value == pytest.approx(3.0, abs=1e-12)
    assert extrapolate_to_zero([(r, 2.5) for r in rs]).value == pytest.approx(2.5, abs=1e-14)
    with pytest.raises(ValueError):
        extrapolate_to_zero([(0.1, 1.0), (0.2, 1.0)], 2)
    with pytest.raises(ConditioningError):
        extrapolate_to_zero([(0.1, 1.0), (0.1, 1.0), (0.2, 1.0), (0.3, 1.0)], 2)


def test_discrete_path_validation():
    with pytest.raises(ValueError):
        DiscretePath(np.array([0.0, 0.5, 0.4]), np.zeros(3))
