import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gammafrac.density import BoxConstraintError
from gammafrac.mesh import (HORIZONTAL, VERTICAL, DiscreteDeformation, DisplacementField, GridMesh,
                            build_affine, build_cracked, field_from_dict, field_to_dict,
                            jump_set_measure, piecewise_field, slice_restriction, slices,
                            write_slices_csv)

meshes = st.builds(GridMesh, st.sampled_from([0.5, 1.0, 2.0]), st.integers(2, 9), st.integers(2, 9),
                   st.sampled_from([0.0, 0.1]))


def random_field(mesh, rng, p_open=0.3):
    F = rng.normal(size=(mesh.n_cells, 2, 2))
    d = rng.normal(size=(mesh.n_cells, 2))
    return DisplacementField(mesh, F, d, rng.random(mesh.n_facets) < p_open)


@given(meshes)
def test_facet_bookkeeping(mesh):
    fc = mesh.facet_cells
    assert mesh.n_facets == (mesh.nx - 1) * mesh.ny + mesh.nx * (mesh.ny - 1)
    # every interior facet has two distinct incident cells that are grid neighbours
    assert np.all(fc[:, 0] != fc[:, 1])
    step = np.where(mesh.facet_axis == VERTICAL, 1, mesh.nx)
    assert np.all(fc[:, 1] - fc[:, 0] == step)
    total = (mesh.nx - 1) * mesh.hy * mesh.ny + (mesh.ny - 1) * mesh.hx * mesh.nx
    assert mesh.facet_length.sum() == pytest.approx(total, rel=1e-12)
    assert mesh.boundary_length.sum() == pytest.approx(2 * (mesh.l + 2 * mesh.eta) + 2, rel=1e-12)
    assert mesh.cell_area * mesh.n_cells == pytest.approx(mesh.l + 2 * mesh.eta, rel=1e-12)


def test_identity_affine():
    mesh = GridMesh(1.0, 8, 6)
    y = build_affine(mesh, np.eye(2))
    assert jump_set_measure(y) == 0.0
    assert y.continuity_residual() == 0.0
    assert np.allclose(y.at_centers(), mesh.centers)


def test_affine_rejects_large_gradient():
    with pytest.raises(BoxConstraintError):
        build_affine(GridMesh(1.0, 4, 4), 20 * np.eye(2))
    with pytest.raises(BoxConstraintError):
        build_affine(GridMesh(1.0, 4, 4), np.eye(2), (11.0, 0.0))


def test_cracked_competitor():
    mesh = GridMesh(1.0, 10, 7)
    la = 0.03
    y = build_cracked(mesh, 0.5, (np.eye(2), np.zeros(2)), (np.eye(2), np.array([la, 0.0])))
    assert jump_set_measure(y) == pytest.approx(1.0, rel=1e-12)
    jumps = y.jumps()[y.open]
    assert np.allclose(jumps, [la, 0.0], atol=1e-15)
    assert y.continuity_residual() <= y.tau_cont
    with pytest.raises(ValueError):
        build_cracked(mesh, 1.2, (np.eye(2), np.zeros(2)), (np.eye(2), np.zeros(2)))


def test_flags_drive_measure():
    mesh = GridMesh(1.0, 6, 6)
    same = (np.eye(2), np.zeros(2))
    y = build_cracked(mesh, 0.5, same, same)
    assert np.all(y.jumps() == 0)
    assert jump_set_measure(y) == pytest.approx(1.0)


def test_two_cracks_additive():
    mesh = GridMesh(1.0, 9, 5)
    open_mask = np.zeros(mesh.n_facets, dtype=bool)
    open_mask[mesh.column_facets(3)] = True
    open_mask[mesh.column_facets(6)] = True
    labels = np.digitize(mesh.centers[:, 0], [mesh.column_x(3), mesh.column_x(6)])
    y = piecewise_field(mesh, labels, [(np.eye(2), (0, 0)), (np.eye(2), (0.1, 0)), (np.eye(2), (0.2, 0))],
                        open_mask)
    assert jump_set_measure(y) == pytest.approx(2.0)


def test_jump_records_normals():
    mesh = GridMesh(1.0, 4, 4)
    u = random_field(mesh, np.random.default_rng(0), p_open=1.0)
    recs = u.jump_records()
    assert len(recs) == mesh.n_facets
    for r in recs[:3]:
        assert np.allclose(r.normal, [1, 0]) or np.allclose(r.normal, [0, 1])


@given(meshes, st.integers(0, 10**6))
def test_slice_identity(mesh, seed):
    u = random_field(mesh, np.random.default_rng(seed))
    for axis in (VERTICAL, HORIZONTAL):
        total = sum(s.n_jumps * s.width for s in slices(u, axis))
        direct = mesh.facet_length[u.open & (mesh.facet_axis == axis)].sum()
        assert total == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_slice_of_uniaxial_strain():
    mesh = GridMesh(1.0, 8, 4)
    a = 0.7
    u = DisplacementField(mesh, np.tile(np.diag([a, 0.0]), (mesh.n_cells, 1, 1)), np.zeros((mesh.n_cells, 2)),
                          np.zeros(mesh.n_facets, dtype=bool))
    s = slice_restriction(u, VERTICAL, 2)
    assert np.allclose(s.slopes, a) and s.n_jumps == 0


def test_slices_of_crack():
    mesh = GridMesh(1.0, 8, 4)
    la = 0.4
    u = build_cracked(mesh, 0.5, (np.zeros((2, 2)), np.zeros(2)), (np.zeros((2, 2)), np.array([la, 0.0])),
                      cls=DisplacementField)
    for s in slices(u, VERTICAL):
        assert s.n_jumps == 1 and s.jump_height[0] == pytest.approx(la)
    for s in slices(u, HORIZONTAL):
        assert s.n_jumps == 0


def test_serialization_roundtrip(tmp_path):
    mesh = GridMesh(1.0, 5, 3, eta=0.2)
    u = random_field(mesh, np.random.default_rng(3))
    back = field_from_dict(json.loads(json.dumps(field_to_dict(u))))
    assert back.mesh == mesh and np.array_equal(back.F, u.F) and np.array_equal(back.open, u.open)
    y = build_affine(mesh, np.eye(2))
    back = field_from_dict(field_to_dict(y))
    assert isinstance(back, DiscreteDeformation)
    write_slices_csv(tmp_path / "s.csv", u, VERTICAL)
    assert (tmp_path / "s.csv").read_text().startswith("axis,slice")


def test_collar_cells():
    mesh = GridMesh(1.0, 12, 3, eta=1 / 10)
    assert mesh.in_omega.sum() == 10 * 3
    assert mesh.collar.sum() == 2 * 3
