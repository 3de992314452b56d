"""Random fields, partitions and triples used by experiments and tests."""
from __future__ import annotations

import numpy as np

from .energy import LimitTriple
from .mesh import DisplacementField, GridMesh, piecewise_field
from .partition import CacciopPartition
from .rigid import PiecewiseInfinitesimalMotion, PiecewiseRigidMotion


def block_partition(mesh: GridMesh, rng, max_components: int = 4, blocks: int = 4) -> CacciopPartition:
    """Labels drawn on a coarse blocks x blocks grid (components may be disconnected)."""
    k = int(rng.integers(1, max_components + 1))
    coarse = rng.integers(0, k, size=(blocks, blocks))
    iy = np.minimum((mesh.centers[:, 1] * blocks).astype(int), blocks - 1)
    ix = np.minimum(((mesh.centers[:, 0] - mesh.x0) / (mesh.nx * mesh.hx) * blocks).astype(int), blocks - 1)
    return CacciopPartition.from_labels(mesh, coarse[iy, ix])


def grown_partition(mesh: GridMesh, rng, n_components: int) -> CacciopPartition:
    """Connected components grown by a random multi-source flood fill."""
    n = mesh.n_cells
    k = min(n_components, n)
    labels = -np.ones(n, dtype=int)
    seeds = rng.choice(n, size=k, replace=False)
    labels[seeds] = np.arange(k)
    frontier = list(seeds)
    nbrs = [[] for _ in range(n)]
    for a, b in mesh.facet_cells:
        nbrs[a].append(b)
        nbrs[b].append(a)
    while frontier:
        i = int(rng.integers(len(frontier)))
        c = frontier[i]
        free = [m for m in nbrs[c] if labels[m] < 0]
        if not free:
            frontier[i] = frontier[-1]
            frontier.pop()
            continue
        m = free[int(rng.integers(len(free)))]
        labels[m] = labels[c]
        frontier.append(m)
    return CacciopPartition.from_labels(mesh, labels)


def random_rigid(P: CacciopPartition, rng, b_scale: float = 1.0) -> PiecewiseRigidMotion:
    k = P.n_components
    return PiecewiseRigidMotion(P, rng.uniform(-np.pi, np.pi, k), rng.uniform(-b_scale, b_scale, (k, 2)))


def random_infinitesimal(P: CacciopPartition, rng, scale: float = 1.0) -> PiecewiseInfinitesimalMotion:
    k = P.n_components
    return PiecewiseInfinitesimalMotion(P, rng.uniform(-scale, scale, k), rng.uniform(-scale, scale, (k, 2)))


def random_displacement(mesh: GridMesh, rng, pieces: int = 3, bound: float = 1.0,
                        crack_prob: float = 0.5) -> DisplacementField:
    """Piecewise affine u with |u|_inf <= bound on the unit-height strip of width l <= 1.

    Pieces are vertical bands; band interfaces are cracked with probability ``crack_prob``.
    """
    ext = max(mesh.l, 1.0)
    g = 0.25 * bound / ext
    band = np.minimum(((mesh.centers[:, 0] - mesh.x0) / (mesh.nx * mesh.hx) * pieces).astype(int), pieces - 1)
    F = rng.uniform(-g, g, (pieces, 2, 2))
    d = rng.uniform(-0.4 * bound, 0.4 * bound, (pieces, 2))
    opened = rng.random(pieces) < crack_prob
    fc = mesh.facet_cells
    bm, bp = band[fc[:, 0]], band[fc[:, 1]]
    open_mask = (bm != bp) & opened[np.minimum(bm, bp)]
    return DisplacementField(mesh, F[band], d[band], open_mask)


def random_triple(mesh: GridMesh, rng, max_components: int = 4, bound: float = 1.0) -> LimitTriple:
    P = block_partition(mesh, rng, max_components)
    return LimitTriple(random_displacement(mesh, rng, bound=bound), P, random_rigid(P, rng))


def interface_gaps(P: CacciopPartition, T: PiecewiseRigidMotion) -> np.ndarray:
    """Per interface facet, the larger endpoint distance between the two motions."""
    mesh = P.mesh
    iface = np.flatnonzero(P.interface_facets)
    if iface.size == 0:
        return np.zeros(0)
    a = P.labels[mesh.facet_cells[iface, 0]]
    b = P.labels[mesh.facet_cells[iface, 1]]
    ends = mesh.facet_ends[iface]  # (n, 2, 2)
    R, off = T.R, T.b
    ya = np.einsum("nij,nkj->nki", R[a], ends) + off[a][:, None, :]
    yb = np.einsum("nij,nkj->nki", R[b], ends) + off[b][:, None, :]
    return np.linalg.norm(ya - yb, axis=2).max(axis=1)


def planted_rigid(mesh: GridMesh, rng, max_components: int = 6, min_gap: float = 1e-4,
                  open_prob: float = 0.5, M: float = 10.0):
    """A piecewise rigid deformation on connected random components.

    Motions are perturbations of a common motion with log-uniform sizes in
    [min_gap, 1]; draws with an interface gap below ``min_gap`` are rejected.
    Interface facets are flagged open independently with probability ``open_prob``.
    Returns (y, P, T).
    """
    while True:
        P = grown_partition(mesh, rng, int(rng.integers(1, max_components + 1)))
        k = P.n_components
        th0, b0 = rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1, 2)
        size = 10.0 ** rng.uniform(np.log10(min_gap), 0, k)
        th = th0 + size * rng.choice([-1, 1], k) * rng.uniform(0.5, 1, k)
        b = b0 + size[:, None] * rng.uniform(-1, 1, (k, 2))
        T = PiecewiseRigidMotion(P, th, b)
        if k == 1 or interface_gaps(P, T).min() >= min_gap:
            break
    open_mask = P.interface_facets & (rng.random(mesh.n_facets) < open_prob)
    y = piecewise_field(mesh, P.labels, [m.as_map() for m in T.motions()], open_mask, M=M)
    return y, P, T
