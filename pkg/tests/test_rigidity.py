import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gammafrac.density import rotation
from gammafrac.energy import energy_seg
from gammafrac.mesh import DiscreteDeformation, GridMesh, build_affine
from gammafrac.partition import CacciopPartition, is_coarser
from gammafrac.rigid import PiecewiseRigidMotion, wrap_angle
from gammafrac.rigidity import (NotPiecewiseRigid, build_concave_majorant, coarsest_from_deformations,
                                coarsest_partition, concave_envelope, piecewise_f, piecewise_rigid_decompose,
                                rescaled_displacement, scaled_separation, three_block_sequence)
from gammafrac.samplers import planted_rigid

MESH = GridMesh(1.0, 10, 10)
EPS = [1e-2, 1e-3, 1e-4]


def test_global_rigid():
    y = build_affine(MESH, rotation(0.7), (0.2, -0.4))
    P, T = piecewise_rigid_decompose(y)
    assert P.n_components == 1
    assert abs(wrap_angle(T.thetas[0] - 0.7)) < 1e-12 and np.allclose(T.b[0], [0.2, -0.4], atol=1e-12)


def test_strained_rejected():
    with pytest.raises(NotPiecewiseRigid):
        piecewise_rigid_decompose(build_affine(MESH, np.diag([1.01, 1.0])))


@given(st.integers(0, 10**6))
def test_planted_recovery(seed):
    y, P, T = planted_rigid(MESH, np.random.default_rng(seed), max_components=4)
    P2, T2 = piecewise_rigid_decompose(y)
    assert P2.same_as(P)
    assert np.abs(T2.cell_rotations() - T.cell_rotations()).max() <= 1e-10
    assert np.abs(T2.cell_offsets() - T.cell_offsets()).max() <= 1e-10



@given(st.integers(0, 10**6))
def test_seg_energy_roundtrip(seed):
    y, P, T = planted_rigid(MESH, np.random.default_rng(seed), max_components=4, open_prob=1.0)
    P2, _ = piecewise_rigid_decompose(y)
    assert energy_seg(y) == pytest.approx(P2.interior_interface_length(), rel=1e-12, abs=1e-15)


def test_three_blocks_each_eps():
    for eps, y in three_block_sequence(EPS):
        P, T = piecewise_rigid_decompose(y)
        assert P.n_components == 3
        assert np.allclose(T.b, [[0, 0], np.sqrt(eps) * np.array([0.6, -0.8]), [eps**0.25] * 2], atol=1e-12)


def test_rescaled_displacement_identities(rng):
    P = CacciopPartition.from_labels(MESH, (MESH.centers[:, 0] > 0.5).astype(int))
    T = PiecewiseRigidMotion(P, [0.1, 0.2], [[0, 0], [0.3, 0]])
    y = T.to_field()
    u = rescaled_displacement(y, T, 1e-4)
    assert np.abs(u.F).max() == 0 and np.abs(u.d).max() == 0
    assert np.array_equal(u.open, P.interface_facets)
    w = rng.normal(size=(MESH.n_cells, 2, 2)) * 0.1
    wd = rng.normal(size=(MESH.n_cells, 2)) * 0.1
    eps = 1e-4
    y2 = DiscreteDeformation(MESH, y.F + np.sqrt(eps) * w, y.d + np.sqrt(eps) * wd, y.open)
    u2 = rescaled_displacement(y2, T, eps)
    assert np.allclose(u2.F, w, atol=1e-12) and np.allclose(u2.d, wd, atol=1e-12)


def test_coarsest_three_blocks():
    res, u = coarsest_from_deformations(three_block_sequence(EPS))
    mesh = u.mesh
    blocks = np.minimum((mesh.centers[:, 0] // 1).astype(int), 2)
    expected = CacciopPartition.from_labels(mesh, np.where(blocks == 2, 1, 0))
    assert res.partition.same_as(expected)
    mid = blocks == 1
    assert np.abs(u.at_centers()[mid] - [0.6, -0.8]).max() <= 1e-6
    assert res.band[0] <= 10 < res.band[1]


def test_coarsest_all_equal():
    P = CacciopPartition.from_labels(MESH, (MESH.centers[:, 0] > 0.5).astype(int))
    T = PiecewiseRigidMotion(P, [0.1, 0.1], [[1, 0], [1, 0]])
    res = coarsest_partition([(e, P, T) for e in EPS])
    assert res.partition.n_components == 1


def test_coarsest_rejects_mismatch():
    P1 = CacciopPartition.single(MESH)
    P2 = CacciopPartition.from_labels(MESH, (MESH.centers[:, 0] > 0.5).astype(int))
    with pytest.raises(ValueError):
        coarsest_partition([(1e-2, P1, PiecewiseRigidMotion.identity(P1)), (1e-3, P2, PiecewiseRigidMotion.identity(P2))])


@given(st.floats(0.05, 5.0))
def test_threshold_band_robustness(scale):
    seq = three_block_sequence(EPS)
    dec = [(e, *piecewise_rigid_decompose(y)) for e, y in seq]
    base = coarsest_partition(dec)
    lo, hi = base.band
    scaled = [(e, P, PiecewiseRigidMotion(P, T.thetas, scale * T.b)) for e, P, T in dec]
    res = coarsest_partition(scaled)
    if scale * lo <= 10 < scale * hi:
        assert res.partition.same_as(base.partition)
    assert is_coarser(res.partition, dec[-1][1])


@given(st.integers(0, 10**6))
def test_output_coarser_than_inputs(seed):
    rng = np.random.default_rng(seed)
    mesh = GridMesh(1.0, 6, 6)
    y, P, T = planted_rigid(mesh, rng, max_components=4)
    seq = []
    for e in EPS:
        drift = rng.normal(size=T.b.shape) * np.sqrt(e) * rng.uniform(0, 30)
        seq.append((e, P, PiecewiseRigidMotion(P, T.thetas, T.b + drift)))
    res = coarsest_partition(seq)
    for _, Pk, _ in seq:
        assert is_coarser(res.partition, Pk)
    assert res.band[0] <= 10 < res.band[1] or res.band[1] == np.inf or res.band[0] == 0


def test_scaled_separation():
    P = CacciopPartition.from_labels(MESH, (MESH.centers[:, 0] > 0.5).astype(int))
    T = PiecewiseRigidMotion(P, [0.0, 0.0], [[0, 0], [0.03, 0.04]])
    assert scaled_separation(T, 0, 1, 1e-4) == pytest.approx(5.0)


increasing = st.lists(st.floats(0.01, 100.0), min_size=1, max_size=10, unique=True).map(sorted)


@given(increasing)
def test_concave_majorant_properties(b):
    b = np.array(b)
    if np.any(np.diff(b) <= 1e-9):
        return
    psi = build_concave_majorant(b)
    slopes = psi.slopes
    assert np.all(slopes >= 0)
    assert np.all(np.diff(slopes) <= 1e-9 * (1 + np.abs(slopes[:-1])))
    assert np.all(psi(b) <= 2.0 ** np.arange(1, len(b) + 1) * (1 + 1e-12))
    t = np.linspace(0, b[-1], 2001)
    f = piecewise_f(b, t)
    assert np.all(psi(t) <= f + 1e-9 * (1 + f))
    assert np.all(f <= concave_envelope(b, t) + 1e-9 * (1 + f))


def test_concave_majorant_geometric_sequence():
    b = 2.0 ** np.arange(1, 8)
    psi = build_concave_majorant(b)
    assert np.allclose(psi(b), 2.0 ** np.arange(1, 8))


def test_concave_majorant_worked_example():
    psi = build_concave_majorant([1, 1.5, 10, 11, 50])
    assert np.allclose(psi.x, [0, 1, 2 + 2 / 13, 10, 50], atol=1e-12)
    assert np.allclose(psi.slopes[:2], [2, 2])


def test_concave_majorant_rejects_bad_input():
    with pytest.raises(ValueError):
        build_concave_majorant([1, 1, 2])
    with pytest.raises(ValueError):
        build_concave_majorant([0, 1])
