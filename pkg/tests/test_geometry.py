import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exheat.geometry import (Disk, Ellipse, ExteriorDomain, GeometryError, HalfPlane, InteriorDomain,
                             Square, StarShaped, boundary_trace, contains, distance_to_obstacle,
                             parse_domain, point_at_distance)


def test_disk_distance(disk):
    assert distance_to_obstacle(disk, [3.0, 0.0]) == pytest.approx(2.0)
    assert distance_to_obstacle(disk, [0.3, 0.1]) == 0.0
    assert contains(disk, [1.5, 0]) and not contains(disk, [0.5, 0])


def test_halfplane_and_square():
    hp = HalfPlane()
    assert hp.rho(np.array([4.0, 0.25])) == pytest.approx(0.25)
    assert hp.rho(np.array([0.0, -1.0])) == 0.0
    sq = Square(1.0)
    assert sq.bounded
    assert sq.rho(np.array([0.5, 0.5])) == pytest.approx(0.5)
    assert sq.rho(np.array([0.1, 0.7])) == pytest.approx(0.1)


def test_ellipse_distance_matches_brute_force():
    e = ExteriorDomain(Ellipse(2.0, 1.0))
    th = np.linspace(0, 2 * np.pi, 200001)
    curve = np.stack([2 * np.cos(th), np.sin(th)], -1)
    for x in ([3.0, 0.5], [0.2, 1.7], [-2.5, -2.5]):
        brute = np.min(np.linalg.norm(curve - np.array(x), axis=-1))
        assert e.rho(np.array(x)) == pytest.approx(brute, rel=1e-6)


def test_trace_of_disk():
    tr = boundary_trace(ExteriorDomain(Disk(2.0)), 64)
    assert np.allclose(np.linalg.norm(tr.points, axis=-1), 2.0)
    assert tr.weights.sum() == pytest.approx(4 * math.pi)
    # normals point into the obstacle's exterior complement convention: unit length
    assert np.allclose(np.linalg.norm(tr.normals, axis=-1), 1.0)
    assert np.allclose(tr.curvature, 0.5)


def test_trace_needs_enough_nodes(disk):
    with pytest.raises(GeometryError):
        boundary_trace(disk, 2)


def test_parse_domain():
    assert isinstance(parse_domain("disk:2"), ExteriorDomain)
    assert parse_domain("disk:2").obstacle.radius == 2.0
    assert isinstance(parse_domain("halfplane"), HalfPlane)
    assert isinstance(parse_domain("idisk:1"), InteriorDomain)
    assert isinstance(parse_domain("star:1,0.1,0").obstacle, StarShaped)
    with pytest.raises(GeometryError):
        parse_domain("torus:1")
    with pytest.raises(GeometryError):
        parse_domain("star:1,0.1")


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0, 2 * math.pi))
def test_point_at_distance_roundtrip(target, angle):
    for dom in (ExteriorDomain(Disk(1.0)), ExteriorDomain(Ellipse(2.0, 1.0))):
        x = point_at_distance(dom, target, angle)
        assert float(dom.rho(x)) == pytest.approx(target, rel=1e-7, abs=1e-10)


def test_obstacle_validation():
    with pytest.raises((ValueError, GeometryError)):
        Disk(-1.0)
    with pytest.raises((ValueError, GeometryError)):
        StarShaped(1.0, (0.9,), (0.5,))
