from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from exheat.bridge_mc import McConfig, block_generator, bridge_weights, kernel_estimate, survival_probability
from exheat.exact_kernels import halfplane_kernel, halfplane_survival
from exheat.geometry import HalfPlane


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(n_paths=10)
    with pytest.raises(ValueError):
        McConfig(n_steps=0)
    with pytest.raises(ValueError):
        McConfig(seed=-1)


def test_block_streams_are_independent_of_order():
    a = block_generator(7, 3).standard_normal(5)
    block_generator(7, 2).standard_normal(100)
    assert np.array_equal(a, block_generator(7, 3).standard_normal(5))
    assert not np.array_equal(a, block_generator(7, 4).standard_normal(5))


def test_one_step_bridge_is_exact_on_halfplane():
    # with one step only the endpoint crossing factor applies, which is the exact half-plane survival
    hp = HalfPlane()
    x, y = np.array([0.0, 0.4]), np.array([0.3, 0.9])
    w = bridge_weights(hp, 0.5, x, y, 1, 4, np.random.default_rng(0))
    assert np.allclose(w, halfplane_survival(0.5, x, y))


def test_halfplane_estimate_within_error(disk):
    hp = HalfPlane()
    x, y = np.array([0.0, 1.0]), np.array([0.5, 1.0])
    est = kernel_estimate(hp, 1.0, x, y, McConfig(20000, 16, seed=3))
    assert abs(est.mean - halfplane_kernel(1.0, x, y)) < 4 * est.stderr + 1e-3 * est.mean


def test_thread_count_does_not_change_result(disk):
    cfg = McConfig(5000, 16, seed=11, block_size=1000)
    x, y = np.array([1.5, 0.0]), np.array([0.0, 1.5])
    a = survival_probability(disk, 1.0, x, y, cfg)
    with ThreadPoolExecutor(3) as ex:
        b = survival_probability(disk, 1.0, x, y, cfg, ex.map)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


def test_survival_is_a_probability(disk):
    est = survival_probability(disk, 2.0, [1.2, 0.0], [-1.2, 0.0], McConfig(2000, 32))
    assert 0.0 <= est.mean <= 1.0


def test_points_must_be_inside(disk):
    with pytest.raises(ValueError):
        kernel_estimate(disk, 1.0, [0.5, 0.0], [2.0, 0.0], McConfig(1000, 4))
    with pytest.raises(ValueError):
        kernel_estimate(disk, 0.0, [1.5, 0.0], [2.0, 0.0], McConfig(1000, 4))
