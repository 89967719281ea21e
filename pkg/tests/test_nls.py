from fractions import Fraction

import numpy as np
import pytest

from exheat.nls import (SmallnessError, build_model, exponents, ground_state_data, linear_flow, mixed_norm,
                        picard_solve, strichartz_norm)


def test_half_exponents():
    ex = exponents(2, "1/2")
    assert (ex.p, ex.q, ex.r) == (4, 5, Fraction(10, 3))
    assert (ex.q_tilde_conj, ex.r_tilde_conj) == (1, 2)
    assert ex.as_text() == "p=4 q=5 r=10/3 q̃′=1 r̃′=2"


@pytest.mark.parametrize("k", range(1, 16))
def test_identities_on_sixteenths(k):
    ex = exponents(2, Fraction(k, 16))
    assert all(ex.identities().values())
    assert 2 / ex.q + 2 / ex.r == 1
    assert ex.q == (1 + ex.p) * ex.q_tilde_conj


def test_exponents_window():
    with pytest.raises(ValueError):
        exponents(2, Fraction(1))
    with pytest.raises(ValueError):
        exponents(2, Fraction(0))


@pytest.fixture(scope="module")
def small_model():
    return build_model(h=0.5, n_modes=60, n_times=32, t_end=0.25)


def test_linear_flow_preserves_l2(small_model):
    c0 = ground_state_data(small_model, exponents(2, "1/2"), 0.1)
    u = linear_flow(small_model, c0)
    norms = np.linalg.norm(u.coef, axis=-1)
    assert np.allclose(norms, norms[0])


def test_picard_small_data(small_model):
    ex = exponents(2, "1/2")
    c0 = ground_state_data(small_model, ex, 0.05)
    res = picard_solve(c0, ex, 1, small_model, 0.1)
    assert res.iterations <= 10 and res.norm <= 0.2
    assert strichartz_norm(res.state, ex, small_model) == pytest.approx(res.norm)
    with pytest.raises(SmallnessError):
        picard_solve(ground_state_data(small_model, ex, 1.0), ex, 1, small_model, 0.1)


def test_mixed_norm_scales_linearly(small_model):
    ex = exponents(2, "1/2")
    u = linear_flow(small_model, ground_state_data(small_model, ex, 0.1))
    a = mixed_norm(u, 0.5, ex.q, ex.r, small_model).value
    u2 = linear_flow(small_model, 2 * ground_state_data(small_model, ex, 0.1))
    assert mixed_norm(u2, 0.5, ex.q, ex.r, small_model).value == pytest.approx(2 * a)
