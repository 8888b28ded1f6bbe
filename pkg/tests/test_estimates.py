import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatball_lab import estimates as E
from heatball_lab import kernels as K
from heatball_lab import models as M


def test_ell_bounds_collapse_when_flat():
    lo, hi = E.ell_two_sided_bounds(0.0, 0.0, 1.2, 0.3, 3)
    assert lo == hi == pytest.approx(1.44 / 1.2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.floats(0, 3), st.floats(0.01, 1), st.sampled_from([1, 2, 3]))
def test_ell_bounds_ordered(k, Kk, d, t, n):
    lo, hi = E.ell_two_sided_bounds(k, Kk, d, t, n)
    assert lo <= hi


def test_ell_bounds_reject_bad_input():
    with pytest.raises(M.DomainError):
        E.ell_two_sided_bounds(-1.0, 0.0, 1.0, 0.5, 2)
    with pytest.raises(M.DomainError):
        E.ell_two_sided_bounds(0.0, 0.0, 1.0, 0.0, 2)


@pytest.mark.parametrize("m", [M.gaussian_soliton(2), M.euclidean(3), M.shrinking_sphere(2, 0.1),
                               M.shrinking_sphere(3, 0.1)], ids=lambda m: m.name)
def test_ell_audit_clean(m):
    rep = E.audit_ell_bounds(m, 50)
    assert rep.ok and rep.checked == 100  # both sides


def test_ell_audit_rejects_vertex():
    with pytest.raises(K.HypothesisError):
        E.audit_ell_bounds(M.shrinking_sphere(2, 0.0))


def test_containment_closed_form():
    rho, c = E.heatball_radius_bound(1.0, 0.0, np.array([0.01, 0.05]), 1.0, 2)
    t = np.array([0.01, 0.05])
    np.testing.assert_allclose(rho, np.sqrt(4 * t * np.log(1 / (4 * math.pi * t))), rtol=1e-14)
    assert c == pytest.approx(1 / (4 * math.pi))
    # past the lifetime c r^2 (k = 0) the comparison radius is zero
    assert float(E.heatball_radius_bound(1.0, 0.0, 0.09, 1.0, 2)[0]) == 0.0


def test_containment_constant_grows_with_k():
    assert E.containment_constant(0.75, 1.0) == pytest.approx(math.e / (4 * math.pi))


@pytest.mark.parametrize("m", [M.gaussian_soliton(2), M.shrinking_sphere(2, 0.1), M.shrinking_sphere(3, 0.1)],
                         ids=lambda m: m.name)
def test_containment_audit_clean(m):
    k, _ = M.ricci_bounds(m, 0.0, m.horizon)
    c = E.containment_constant(k, m.horizon)
    rmax = math.sqrt(min(m.horizon / c, 4 * math.pi))
    for frac in (0.1, 1.0):
        assert E.check_containment(m, frac * rmax, slices=60).ok


def test_containment_scale_error():
    from heatball_lab.heatball import ScaleError
    with pytest.raises(ScaleError):
        E.check_containment(M.gaussian_soliton(2), 10.0)


def test_envelopes_at_start_point():
    lo, hi = E.geodesic_speed_envelopes(0.4, 0.3, 0.2, 1.0, 0.25, 1.0, 0.25)
    assert float(lo) == float(hi) == pytest.approx(0.4 / math.sqrt(0.25))


@pytest.mark.parametrize("which", ["upper", "lower"])
def test_envelope_small_curvature_limit(which):
    # f(eps) - f(0) agrees with its first-order term
    g0, A, t0, t1, t = 0.7, 1.3, 0.2, 1.0, 0.8
    dt, a = t - t0, A * math.sqrt(t1)
    half = 1 / (2 * math.sqrt(t))
    eps = 1e-8
    if which == "upper":
        f = lambda k: E.geodesic_speed_envelopes(g0, k, 0.0, A, t0, t1, t)[1]
        slope = half * (2 * g0 * dt + a * dt * dt / 2)
    else:
        f = lambda k: E.geodesic_speed_envelopes(g0, 0.0, k, A, t0, t1, t)[0]
        slope = half * (-2 * g0 * dt + a * dt * dt / 2)
    assert float(f(eps) - f(0.0)) == pytest.approx(slope * eps, abs=1e-10 * eps + 1e-15)


def test_envelopes_domain():
    with pytest.raises(M.DomainError):
        E.geodesic_speed_envelopes(0.4, 0.0, 0.0, 1.0, 0.2, 1.0, 1.5)


@pytest.mark.parametrize("m", [M.gaussian_soliton(2), M.shrinking_sphere(2, 0.1)], ids=lambda m: m.name)
def test_speed_audit_clean(m):
    rep = E.audit_speed_envelopes(m, [(0.1, 0.1), (0.5, 0.5), (1.0, 1.0)])
    assert rep.ok and rep.checked > 0


@pytest.mark.parametrize("model", [M.euclidean(2), M.sphere(2)], ids=lambda m: m.name)
def test_gradient_constants_stable(model):
    kf = K.default_field(model).shifted(0.1)
    coarse, fine, stable = E.gradient_estimate_stability(kf, 1.0, nd=16, nt=16)
    assert stable
    assert math.isfinite(fine.C1) and math.isfinite(fine.C2)
    assert fine.grid == (32, 32)


def test_gradient_constants_ignore_normalization():
    kf = K.euclidean_field(M.euclidean(2)).shifted(0.1)
    a = E.gradient_estimate_audit(kf, 1.0, nd=12, nt=12)
    b = E.gradient_estimate_audit(kf.scaled(7.5), 1.0, nd=12, nt=12)
    assert b.A == pytest.approx(7.5 * a.A)
    assert (b.C1, b.C2) == (a.C1, a.C2)
    assert b.required == pytest.approx(a.required, rel=1e-12, abs=1e-12)


def test_gradient_needs_bounded_kernel():
    with pytest.raises(K.HypothesisError):
        E.gradient_estimate_audit(K.euclidean_field(M.euclidean(2)), 1.0)


def test_gradient_params_validated():
    with pytest.raises(M.DomainError):
        E.GradientEstimateParams(-1.0, 0.0, 0.0, 1.0)


def test_bound_report_merge():
    a = E._report([(0, 0)], np.array([1.0]), 1.0, 1e-9)
    b = E._report([(1, 1)], np.array([-1.0]), 1.0, 1e-9)
    both = a.merge(b)
    assert both.checked == 2 and both.violations == 1 and not both.ok


def test_radius_bound_matches_flat_slice():
    t = 1 / (4 * math.pi * math.e)
    rho, _ = E.heatball_radius_bound(1.0, 0.0, t, 1.0, 2)
    assert float(rho) == pytest.approx(math.sqrt(1 / (math.pi * math.e)), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0.1, 2), st.floats(0, 1))
def test_radius_bound_vanishes_after_lifetime(k, r, extra):
    c = E.containment_constant(k, 1.0)
    t = c * r * r * (1 + extra)
    assert float(E.heatball_radius_bound(r, k, t, 1.0, 2)[0]) == 0.0


def test_envelopes_without_curvature_gradient():
    lo, hi = E.geodesic_speed_envelopes(0.3, 0.0, 0.0, 0.0, 0.1, 1.0, np.array([0.4, 0.9]))
    np.testing.assert_allclose(hi, 0.3 / np.sqrt([0.4, 0.9]), rtol=1e-15)
    np.testing.assert_allclose(lo, 0.3 / np.sqrt([0.4, 0.9]), rtol=1e-15)


def test_flat_containment_is_tight():
    rep = E.check_containment(M.gaussian_soliton(2), 1.0)
    assert rep.ok and abs(rep.worst_margin) <= 1e-9
