"""Caccioppoli partitions on a grid: label fields with perimeter bookkeeping."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh import GridMesh


class PartitionError(ValueError):
    pass


def _ordered_relabel(labels: np.ndarray) -> np.ndarray:
    """Relabel so component areas are non-increasing; ties go to the smaller original label."""
    uniq, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    order = sorted(range(len(uniq)), key=lambda k: (-counts[k], uniq[k]))
    new = np.empty(len(uniq), dtype=int)
    new[order] = np.arange(len(uniq))
    return new[inv]


@dataclass(frozen=True, eq=False)
class CacciopPartition:
    """Ordered partition of the mesh cells into components P_0, P_1, ...

    Components are label classes and need not be connected.
    """

    mesh: GridMesh
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=int)
        if lab.shape != (self.mesh.n_cells,):
            raise PartitionError("one label per cell required")
        k = lab.max() + 1
        counts = np.bincount(lab, minlength=k)
        if lab.min() < 0 or np.any(counts == 0):
            raise PartitionError("labels must be 0..K-1 without gaps")
        if np.any(np.diff(counts) > 0):
            raise PartitionError("partition is not ordered by area")
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_labels(cls, mesh: GridMesh, labels) -> "CacciopPartition":
        return cls(mesh, _ordered_relabel(np.asarray(labels).ravel()))

    @classmethod
    def single(cls, mesh: GridMesh) -> "CacciopPartition":
        return cls(mesh, np.zeros(mesh.n_cells, dtype=int))

    @property
    def n_components(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def areas(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_components) * self.mesh.cell_area

    def cells(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.labels == j)

    @cached_property
    def interface_facets(self) -> np.ndarray:
        """Mask of interior facets separating two different components."""
        fc = self.mesh.facet_cells
        return self.labels[fc[:, 0]] != self.labels[fc[:, 1]]

    @cached_property
    def interface_matrix(self) -> np.ndarray:
        """Symmetric K x K array of interface lengths H^1(dP_i n dP_j) inside the domain."""
        k = self.n_components
        fc = self.mesh.facet_cells
        mask = self.interface_facets
        a, b = self.labels[fc[mask, 0]], self.labels[fc[mask, 1]]
        ln = self.mesh.facet_length[mask]
        out = np.zeros((k, k))
        np.add.at(out, (a, b), ln)
        np.add.at(out, (b, a), ln)
        return out

    def perimeters(self):
        """(total perimeter incl. outer boundary, perimeter inside the domain, interface matrix)."""
        inner = self.interface_matrix.sum(axis=1)
        outer = np.bincount(self.labels, weights=self.mesh.boundary_length, minlength=self.n_components)
        return inner + outer, inner, self.interface_matrix

    def interior_interface_length(self) -> float:
        return float(self.mesh.facet_length[self.interface_facets].sum())

    def density_one_facets(self, j: int) -> np.ndarray:
        """Interior facets with both incident cells in P_j (the discrete (P_j)^1)."""
        fc = self.mesh.facet_cells
        return (self.labels[fc[:, 0]] == j) & (self.labels[fc[:, 1]] == j)

    def canonical(self) -> np.ndarray:
        """Labels renamed in order of first appearance; equal iff partitions coincide."""
        _, first = np.unique(self.labels, return_index=True)
        rank = np.empty(len(first), dtype=int)
        rank[np.argsort(first)] = np.arange(len(first))
        return rank[self.labels]

    def same_as(self, other: "CacciopPartition") -> bool:
        _check_mesh(self, other)
        return bool(np.array_equal(self.canonical(), other.canonical()))

    def connected_pieces(self) -> np.ndarray:
        """Number of 4-connected pieces of each component (diagnostic)."""
        grid = self.labels.reshape(self.mesh.ny, self.mesh.nx)
        return np.array([ndimage.label(grid == j)[1] for j in range(self.n_components)])


def _check_mesh(p1: CacciopPartition, p2: CacciopPartition):
    if p1.mesh != p2.mesh:
        raise PartitionError("partitions live on different meshes")


def is_coarser(p2: CacciopPartition, p1: CacciopPartition) -> bool:
    """True iff P2 >= P1: every component of P1 lies inside one component of P2."""
    _check_mesh(p1, p2)
    pairs = np.unique(np.stack([p1.labels, p2.labels], -1), axis=0)
    return len(np.unique(pairs[:, 0])) == len(pairs)


def merge(p: CacciopPartition, pairs) -> CacciopPartition:
    """Union-find closure of the given component pairs, reordered by area."""
    k = p.n_components
    pairs = np.asarray(list(pairs), dtype=int).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= k):
        raise PartitionError(f"unknown component id in {pairs.tolist()} (K = {k})")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(k, k))
    _, root = connected_components(graph, directed=False)
    # name each merged class by its smallest member so ties keep the original order
    rep = np.array([np.flatnonzero(root == root[j]).min() for j in range(k)])
    return CacciopPartition.from_labels(p.mesh, rep[p.labels])


def local_structure_check(p: CacciopPartition) -> dict:
    fc = p.mesh.facet_cells
    distinct = np.where(p.labels[fc[:, 0]] != p.labels[fc[:, 1]], 2, 1)
    total, inner, mat = p.perimeters()
    interface = p.interior_interface_length()
    report = {
        "max_components_per_facet": int(distinct.max(initial=1)),
        "interface_symmetric": bool(np.allclose(mat, mat.T, rtol=0, atol=1e-14)),
        "sum_inner_perimeters": float(inner.sum()),
        "total_interface_length": interface,
        "double_counting_ok": bool(abs(inner.sum() - 2 * interface) <= 1e-12 * max(1.0, interface)),
    }
    report["ok"] = (report["max_components_per_facet"] <= 2 and report["interface_symmetric"]
                    and report["double_counting_ok"])
    return report


def partition_to_dict(p: CacciopPartition) -> dict:
    rows = []
    for row in p.labels.reshape(p.mesh.ny, p.mesh.nx):
        runs, start = [], 0
        for i in range(1, len(row) + 1):
            if i == len(row) or row[i] != row[start]:
                runs.append([int(row[start]), i - start])
                start = i
        rows.append(runs)
    return {"mesh": p.mesh.header(), "rle_rows": rows}


def partition_from_dict(data: dict) -> CacciopPartition:
    mesh = GridMesh(**data["mesh"])
    labels = [v for row in data["rle_rows"] for v, n in row for _ in range(n)]
    return CacciopPartition.from_labels(mesh, np.array(labels))


def write_interface_csv(path, p: CacciopPartition):
    mat = p.interface_matrix
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component"] + [str(j) for j in range(p.n_components)])
        for i, row in enumerate(mat):
            w.writerow([str(i)] + [repr(float(v)) for v in row])
