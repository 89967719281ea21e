import math

import numpy as np
import pytest

from exheat.envelope import EnvelopeParams, green_envelope_2d
from exheat.exact_kernels import exterior_disk_green, halfplane_kernel, log_halfplane_kernel
from exheat.geometry import Disk, ExteriorDomain, HalfPlane, Square
from exheat.layer_potential import build_phi
from exheat.potentials import ExactSource
from exheat.spectral import build_operator
from exheat.verify import (InsufficientPrecisionError, RatioReport, ScanGrid, fit_gaussian_bound, green_pairs,
                           scan_eigenfunction, scan_green, scan_heat, scan_phi)


def test_scan_grid_pairings(disk):
    grid = ScanGrid((1.0,), ((1.0, 0.0),), ("diagonal", "radial", "antipodal"))
    pairs = dict((rule, (x, y)) for rule, x, y in grid.pairs(disk))
    x, y = pairs["diagonal"]
    assert np.array_equal(x, y)
    x, y = pairs["radial"]
    assert float(disk.rho(y)) == pytest.approx(3.0)
    x, y = pairs["antipodal"]
    assert np.allclose(x, -y)
    assert len(list(grid.points(disk))) == 3
    with pytest.raises(ValueError):
        ScanGrid((1.0,), ((1.0, 0.0),), ("sideways",))


def test_heat_scan_with_exact_halfplane():
    hp = HalfPlane()
    src = ExactSource(halfplane_kernel, "images", log_halfplane_kernel)
    grid = ScanGrid((0.1, 1.0, 10.0), ((0.5, 0.0), (2.0, 0.0)), ("diagonal", "radial"))
    rep = scan_heat(hp, grid, src, EnvelopeParams(16.0), EnvelopeParams(2.0))
    assert rep.n_excluded == 0 and rep.n_points == 12
    assert 0 < rep.ratio_min <= rep.ratio_max < math.inf
    assert rep.to_dict()["spread"] == pytest.approx(rep.spread)


def test_green_scan_is_deterministic(disk):
    pairs = green_pairs(disk, 50, seed=4)
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(pairs, green_pairs(disk, 50, seed=4)))
    rep = scan_green(disk, pairs, exterior_disk_green, label="exact")
    direct = [exterior_disk_green(x, y) / green_envelope_2d(x, y, disk) for x, y in pairs]
    assert rep.ratio_min == pytest.approx(min(direct))
    assert rep.ratio_max == pytest.approx(max(direct))
    with pytest.raises(ValueError):
        scan_green(disk, [(np.array([2.0, 0]), np.array([2.0, 0]))], exterior_disk_green)


def test_green_pairs_cover_regimes(disk):
    pairs = green_pairs(disk, 1000)
    rx = np.array([float(disk.rho(x)) for x, _ in pairs])
    d = np.array([np.linalg.norm(x - y) for x, y in pairs])
    ry = np.array([float(disk.rho(y)) for _, y in pairs])
    near = d < np.minimum(np.minimum(rx, ry), 1)
    assert near.any() and (~near).any()
    assert (rx < 1).any() and (rx > 100).any()


def test_phi_scan_on_disk(disk):
    w = build_phi(disk)
    rep = scan_phi(disk, w, np.array([[1.0 + r, 0.0] for r in (1e-3, 1.0, 100.0)]))
    assert rep.spread < 2.0


def test_eigenfunction_scan_square():
    rep = scan_eigenfunction(build_operator(Square(1.0), 1 / 16), Square(1.0))
    assert rep.source["lambda1"] == pytest.approx(2 * math.pi**2, rel=0.01)
    assert rep.spread > 1.0


def test_fit_gaussian_bound_recovers_width():
    q = np.linspace(0, 20, 40)
    lv = math.log(3.0) - q / 4.0
    C, c = fit_gaussian_bound(lv, q, np.zeros_like(q), safety=1.0)
    assert c == pytest.approx(4.0) and C == pytest.approx(3.0)
    C2, c2 = fit_gaussian_bound(lv, q, np.zeros_like(q))
    assert c2 == pytest.approx(8.0) and np.all(lv <= math.log(C2) - q / c2 + 1e-12)


def test_report_requires_points(disk):
    grid = ScanGrid((1.0,), ((1.0, 0.0),), ("diagonal",))

    class Noisy(ExactSource):
        def kernel(self, ts, x, y):
            v = np.ones(len(np.atleast_1d(ts)))
            return v, 10 * v

    with pytest.raises(InsufficientPrecisionError):
        scan_heat(disk, grid, Noisy(lambda t, x, y: 1.0), EnvelopeParams(16.0), EnvelopeParams(2.0))
