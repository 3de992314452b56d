import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gammafrac.density import (DIST2, SVK, BoxConstraintError, InvalidDensity, QuadraticForm,
                               alpha_and_fa, dist_so2, eval_w, hessian_q, hessian_q_fd, polar_angle,
                               rotation, sym, sym_coords, taylor_remainder_bound, uniaxial_kkt)

angles = st.floats(-np.pi, np.pi, allow_nan=False)
entries = st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=4).map(
    lambda v: np.array(v).reshape(2, 2))


def dist_by_sampling(F, n=200001):
    th = np.linspace(-np.pi, np.pi, n)
    R = rotation(th)
    return np.sqrt(np.sum((R - F) ** 2, axis=(1, 2))).min()


def test_dist_identity_and_rotation():
    assert dist_so2(np.eye(2)) == 0.0
    assert dist_so2(rotation(0.3)) < 1e-15


def test_dist_stretch_matches_sampling():
    F = np.diag([1.2, 1.0])
    assert dist_so2(F) == pytest.approx(0.2, abs=1e-14)
    assert dist_so2(F) == pytest.approx(dist_by_sampling(F), abs=1e-8)


@given(entries)
def test_dist_matches_sampling_oracle(F):
    # includes det < 0 gradients
    assert dist_so2(F) == pytest.approx(dist_by_sampling(F, 20001), abs=2e-4)
    assert dist_so2(F) <= dist_by_sampling(F, 20001) + 1e-12


@given(angles, entries)
def test_frame_indifference(th, F):
    for W in (DIST2, SVK):
        assert abs(W(rotation(th) @ F) - W(F)) <= 1e-12 * (1 + W(F))


def test_frame_indifference_bulk(rng):
    th = rng.uniform(-np.pi, np.pi, 1000)
    F = rng.uniform(-5, 5, (1000, 2, 2))
    F *= np.minimum(1.0, 10.0 / np.sqrt(np.sum(F**2, axis=(1, 2))))[:, None, None]
    diff = np.abs(DIST2(rotation(th) @ F) - DIST2(F))
    assert diff.max() <= 1e-12 * (1 + DIST2(F).max())


@given(angles)
def test_zero_on_rotations(th):
    assert eval_w(DIST2, rotation(th)) < 1e-28
    assert eval_w(SVK, rotation(th)) < 1e-28


@given(entries)
def test_dist_zero_iff_polar_factor_reproduces(F):
    R = rotation(polar_angle(F))
    reproduces = np.abs(R - F).max() <= 1e-12
    assert reproduces == (dist_so2(F) <= 1e-12)


def test_eval_w_default_value_and_box():
    assert eval_w(DIST2, np.diag([1.2, 1.0])) == pytest.approx(0.04, abs=1e-14)
    with pytest.raises(BoxConstraintError):
        eval_w(DIST2, 20 * np.eye(2), M=10)


@given(entries)
def test_lower_bound_growth(F):
    # svk dominates c dist^2 near SO(2) only; dist2 has c = 1 exactly
    assert DIST2(F) == pytest.approx(dist_so2(F) ** 2, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("W", [DIST2, SVK])
def test_fd_hessian_matches_closed_form(W):
    for h in (1e-3, 1e-4):
        Qfd = hessian_q_fd(W, h=h)
        Qc = np.asarray(W.q_closed)
        assert np.abs(Qfd.coef - Qc).max() <= 1e-6 * np.abs(Qc).max()


def test_default_q_is_twice_norm():
    Q = hessian_q(DIST2)
    E = np.array([[0.3, -0.2], [-0.2, 0.7]])
    assert Q(E) == pytest.approx(2 * np.sum(E * E), rel=1e-14)
    assert Q(np.zeros((2, 2))) == 0.0
    A = np.array([[0.0, 1.3], [-1.3, 0.0]])
    assert Q(sym(A)) == 0.0


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4))
def test_half_q_is_second_order_expansion(v):
    G = np.array(v).reshape(2, 2)
    for W in (DIST2, SVK):
        Q = hessian_q(W)
        t = 1e-4
        assert W(np.eye(2) + t * G) / t**2 == pytest.approx(0.5 * Q(sym(G)), abs=1e-3)


def test_alpha_and_fa_default():
    alpha, Fa = alpha_and_fa(hessian_q(DIST2), 0.7)
    assert alpha == pytest.approx(2.0, rel=1e-14)
    assert np.allclose(Fa, [[0.7, 0], [0, 0]], atol=1e-15)
    alpha0, F0 = alpha_and_fa(hessian_q(DIST2), 0.0)
    assert np.all(F0 == 0)


@pytest.mark.parametrize("W", [DIST2, SVK])
def test_alpha_matches_grid_search(W):
    Q = hessian_q(W)
    sol = uniaxial_kkt(Q)
    assert sol.kkt_residual <= 1e-10
    e22, e12 = np.meshgrid(np.linspace(-2, 2, 801), np.linspace(-2, 2, 801))
    E = np.zeros(e22.shape + (2, 2))
    E[..., 0, 0] = 1.0
    E[..., 1, 1] = e22
    E[..., 0, 1] = E[..., 1, 0] = e12
    grid_min = Q(E).min()
    step = 4 / 800
    assert sol.alpha <= grid_min + 1e-14
    assert grid_min - sol.alpha <= np.abs(Q.coef).max() * 4 * step**2
    i = np.unravel_index(np.argmin(Q(E)), e22.shape)
    assert abs(e22[i] - sol.F1[1, 1]) <= step and abs(e12[i] - sol.F1[0, 1]) <= step


def test_svk_constants():
    alpha, Fa = alpha_and_fa(hessian_q(SVK), 1.0)
    assert alpha == pytest.approx(8 / 3, rel=1e-12)
    assert np.allclose(Fa, np.diag([1.0, -1 / 3]), atol=1e-12)


@given(st.floats(-3, 3, allow_nan=False))
def test_alpha_scaling(a):
    Q = hessian_q(SVK)
    alpha, Fa = alpha_and_fa(Q, a)
    _, F1 = alpha_and_fa(Q, 1.0)
    assert Q(Fa) == pytest.approx(a * a * Q(F1), rel=1e-12, abs=1e-14)
    assert Q(Fa) == pytest.approx(alpha * a * a, rel=1e-12, abs=1e-14)


def test_degenerate_q_rejected():
    with pytest.raises(InvalidDensity):
        uniaxial_kkt(QuadraticForm(np.diag([1.0, 0.0, 1.0])))


def test_taylor_remainder():
    assert taylor_remainder_bound(DIST2, np.zeros((2, 2)), [0.1, 0.01]) == 0.0
    G = np.diag([1.0, 0.0])
    b1 = taylor_remainder_bound(DIST2, G, [0.1])
    b2 = taylor_remainder_bound(DIST2, G, [0.01])
    assert b1 < 10 and b2 < 10
    skew = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert taylor_remainder_bound(DIST2, skew, [0.1, 0.01, 0.001]) < 1.0


def test_sym_coords_isometry(rng):
    E = sym(rng.normal(size=(2, 2)))
    z = sym_coords(E)
    assert np.dot(z, z) == pytest.approx(np.sum(E * E), rel=1e-14)
