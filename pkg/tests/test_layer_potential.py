import math

import numpy as np
import pytest

from exheat.geometry import Disk, Ellipse, ExteriorDomain, HalfPlane
from exheat.layer_potential import build_phi, log_modulus_extension, solve_exterior_dirichlet


def test_exterior_dirichlet_constant_data():
    h = solve_exterior_dirichlet(ExteriorDomain(Ellipse(2.0, 1.0)), lambda p: np.ones(len(p)), 128)
    assert np.allclose(h(np.array([[3.0, 0.0], [0.0, 5.0], [40.0, -30.0]])), 1.0, atol=1e-10)


def test_exterior_dirichlet_harmonic_data():
    # u = x1 / |x|^2 is harmonic and bounded outside the unit disk
    dom = ExteriorDomain(Disk(1.0))
    h = solve_exterior_dirichlet(dom, lambda p: p[:, 0] / (p**2).sum(-1), 128)
    pts = np.array([[1.5, 0.3], [-2.0, 2.0], [0.0, -4.0]])
    assert np.allclose(h(pts), pts[:, 0] / (pts**2).sum(-1), atol=1e-10)


def test_unit_disk_phi_closed_form():
    w = build_phi(ExteriorDomain(Disk(1.0)))
    r = np.array([1.5, 2.0, 5.0, 20.0])
    pts = np.stack([r * math.cos(0.4), r * math.sin(0.4)], -1)
    assert np.max(np.abs(w(pts) - (1 + np.log(r)))) < 1e-3
    assert w.c0 == pytest.approx(1 / (2 * math.pi), rel=1e-2)


def test_phi_matches_independent_construction():
    dom = ExteriorDomain(Ellipse(2.0, 1.0))
    w = build_phi(dom)
    alt = log_modulus_extension(dom)
    pts = np.array([[2.5, 0.0], [0.0, 3.0], [10.0, 10.0]])
    assert np.allclose(w.w(pts), alt(pts), rtol=1e-6, atol=1e-8)


def test_phi_is_one_on_boundary_and_grows():
    dom = ExteriorDomain(Ellipse(2.0, 1.0))
    w = build_phi(dom)
    assert w(np.array([2.0 + 1e-9, 0.0])) == pytest.approx(1.0, abs=1e-6)
    assert w(np.array([100.0, 0.0])) > w(np.array([10.0, 0.0])) > 1.0


def test_phi_rejects_halfplane():
    with pytest.raises((TypeError, ValueError)):
        build_phi(HalfPlane())
