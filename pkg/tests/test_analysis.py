import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exheat.analysis import (Bump, CoverageError, SchurKernelSpec, WindowError, band_limited_family,
                             bump_family, counterexample_fR, cutoff_phi, difference_bound_holds,
                             dyadic_range, exponent_window, f_R, fit_difference_constants, hardy_ratio_whole,
                             loglog_slope, lp_multiplier, lp_square_function, multiplier_band, parseval_gap,
                             schur_integrals, smoothstep5)
from exheat.spectral import fourier_grid


def test_windows():
    assert exponent_window("hardy_domain", "Ia", 2, 0.5) is None
    lo, hi = exponent_window("hardy_domain", "Id", 2, 0.5)
    assert (lo, hi) == pytest.approx((-1.0, 3.0))
    assert exponent_window("lp_difference", "whole", 3, 0.8) == pytest.approx((0.0, 1.5))
    with pytest.raises(WindowError):
        SchurKernelSpec.mid("hardy_domain", "IIa", 3, 0.8)
    with pytest.raises(WindowError):
        SchurKernelSpec("hardy_domain", "Id", 2, 0.5, alpha=5.0)
    with pytest.raises(ValueError):
        SchurKernelSpec("lp_difference", "Ia", 2, 0.5)


def test_ball_region_matches_closed_form(disk):
    spec = SchurKernelSpec.mid("hardy_domain", "Ia_ball", 2, 0.5)
    res = schur_integrals(spec, disk, points=np.array([[1.5, 0.0], [3.0, 1.0]]), r_int=16)
    assert np.allclose(res.first, spec.ball_constant(), rtol=1e-3)
    assert spec.ball_constant() == pytest.approx(4 * math.pi)


def test_schur_rejects_small_radius(disk):
    with pytest.raises(ValueError):
        schur_integrals(SchurKernelSpec.mid("hardy_domain", "Ia", 2, 0.5), disk, r_int=4)


def test_bump_family(disk):
    fam = bump_family(disk)
    assert len(fam) == 10
    assert all(b.support_clearance(disk) > 0 for b in fam)
    b = Bump((3.0, 0.0), 0.5)
    assert b(np.array([3.0, 0.0])) == pytest.approx(1.0)
    assert b(np.array([3.6, 0.0])) == 0.0
    # scaled(lam) is x -> f(lam x)
    assert b.scaled(2.0)(np.array([1.5, 0.0])) == pytest.approx(1.0)
    assert b.scaled(2.0).half_width == pytest.approx(0.25)


def test_hardy_window():
    b = Bump((3.0, 0.0), 0.5)
    with pytest.raises(WindowError):
        hardy_ratio_whole(b, 1.0, 2.0)
    assert 0 < hardy_ratio_whole(b, 0.5, 2.0) < 1


def test_hardy_scaling_invariance():
    # whole-plane Hardy ratio is dilation invariant about the origin
    b = Bump((3.0, 0.0), 0.5)
    r1 = hardy_ratio_whole(b, 0.5, 2.0)
    assert hardy_ratio_whole(b.scaled(2.0), 0.5, 2.0) == pytest.approx(r1, rel=1e-3)


def test_multiplier_band_and_partition():
    lo, hi = multiplier_band(0.5, 1)
    assert 0 < lo <= hi and hi / lo < 10
    xi = np.geomspace(0.01, 100, 50)
    assert np.all(lp_multiplier(xi, 1.0, 1) >= 0)
    assert dyadic_range(0.5, 4.0) == [0.5, 1.0, 2.0, 4.0]


def test_parseval_and_square_function():
    L, M = 64.0, 128
    fam = band_limited_family(2, L, M, (1.0, 4.0), np.random.default_rng(0))
    for f in fam:
        assert parseval_gap(f, 0.5, L) < 1e-10
        lhs, rhs = lp_square_function(f, 0.5, 2.0, 1, dyadic_range(2**-6, 2**10), L)
        assert 0.1 < rhs / lhs < 10
    with pytest.raises(CoverageError):
        lp_square_function(fam[0], 0.5, 2.0, 1, [1.0], L)


def test_cutoff_profile():
    R = 16.0
    r = np.array([1.0, R / 2, R])
    v = cutoff_phi(r, R)
    assert v[0] == pytest.approx(1.0) and v[-1] == pytest.approx(0.0)
    assert smoothstep5(np.array([0.0, 1.0])) == pytest.approx([0.0, 1.0])
    assert np.all(f_R(np.array([R, 2 * R]), R) == 0)
    assert f_R(np.array([1.0]), R)[0] == 0 and np.all(f_R(np.array([2.0, 6.0, 12.0]), R) > 0)


def test_counterexample_window():
    with pytest.raises(WindowError):
        counterexample_fR(8.0, 0.5, 2.0)


def test_loglog_slope():
    x = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(x, 3 * x**-0.4) == pytest.approx(-0.4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.1, 5.0))
def test_fit_difference_constants_bound_training_set(rate, amp):
    q = np.linspace(0.0, 30.0, 25)
    vals = amp * np.exp(-rate * q) * (1 + 0.3 * np.sin(q))
    C, c = fit_difference_constants(vals, q, 1.0)
    assert 0 < c <= rate
    assert difference_bound_holds(vals, q, 1.0, C, c, slack=1e-12).all()
