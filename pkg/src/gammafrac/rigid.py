"""Rigid and infinitesimally rigid motions over partitions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import J, polar_angle, rotation
from .mesh import AffineMap, CellField, DiscreteDeformation, DisplacementField, piecewise_field
from .partition import CacciopPartition


def wrap_angle(theta):
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class RigidMotion:
    theta: float
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(2))

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(0.0, np.zeros(2))

    @property
    def R(self) -> np.ndarray:
        return rotation(self.theta)

    def __call__(self, x):
        return np.asarray(x) @ self.R.T + self.b

    def as_map(self) -> AffineMap:
        return AffineMap(self.R, self.b)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class PiecewiseRigidMotion:
    """T = R_j x + b_j on component P_j."""

    partition: CacciopPartition
    thetas: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1, 2)
        k = self.partition.n_components
        if len(th) != k or len(b) != k:
            raise ValueError(f"{len(th)} motions for {k} components")
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_motions(cls, partition: CacciopPartition, motions) -> "PiecewiseRigidMotion":
        return cls(partition, [m.theta for m in motions], [m.b for m in motions])

    @classmethod
    def identity(cls, partition: CacciopPartition) -> "PiecewiseRigidMotion":
        k = partition.n_components
        return cls(partition, np.zeros(k), np.zeros((k, 2)))

    @property
    def n_components(self) -> int:
        return len(self.thetas)

    def motion(self, j: int) -> RigidMotion:
        return RigidMotion(self.thetas[j], self.b[j])

    def motions(self) -> list:
        return [self.motion(j) for j in range(self.n_components)]

    @property
    def R(self) -> np.ndarray:
        return rotation(self.thetas)

    def cell_rotations(self) -> np.ndarray:
        return self.R[self.partition.labels]

    def cell_offsets(self) -> np.ndarray:
        return self.b[self.partition.labels]

    def to_field(self, cls=DiscreteDeformation, open_mask=None, **kw) -> CellField:
        """The motion as a cell field; partition interfaces are flagged open by default."""
        if open_mask is None:
            open_mask = self.partition.interface_facets
        return piecewise_field(self.partition.mesh, self.partition.labels,
                               [m.as_map() for m in self.motions()], open_mask, cls=cls, **kw)

    def to_dict(self) -> dict:
        return {"motions": [m.to_dict() for m in self.motions()]}


@dataclass(frozen=True, eq=False)
class PiecewiseInfinitesimalMotion:
    """m = omega_j J x + d_j on component P_j (skew gradient by construction)."""

    partition: CacciopPartition
    omega: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float).reshape(-1)
        d = np.asarray(self.d, dtype=float).reshape(-1, 2)
        if len(om) != self.partition.n_components or len(d) != len(om):
            raise ValueError("one (omega, d) per component required")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "d", d)

    def cell_maps(self):
        lab = self.partition.labels
        return self.omega[lab, None, None] * J, self.d[lab]

    def to_dict(self) -> dict:
        return {"omega": self.omega.tolist(), "d": self.d.tolist()}


def add_infinitesimal(u: CellField, T: PiecewiseRigidMotion, m: PiecewiseInfinitesimalMotion) -> DisplacementField:
    """u + grad T . m, cell-wise."""
    A, d = m.cell_maps()
    R = T.cell_rotations()
    return DisplacementField(u.mesh, u.F + R @ A, u.d + np.einsum("cij,cj->ci", R, d), u.open)


def _weights(mesh):
    return mesh.cell_area * mesh.in_omega.astype(float)


def fit_rigid(cells, y: CellField) -> RigidMotion:
    """Area-weighted 2D Procrustes fit of y over the cell centers of a component.

    A single-cell component is fitted through the polar factor of its gradient.
    """
    cells = np.atleast_1d(np.asarray(cells, dtype=int))
    if cells.size == 0:
        raise ValueError("cannot fit a rigid motion to an empty component")
    x = y.mesh.centers[cells]
    q = y.evaluate(cells, x)
    if cells.size == 1:
        theta = float(polar_angle(y.F[cells[0]]))
        return RigidMotion(theta, q[0] - rotation(theta) @ x[0])
    w = np.full(cells.size, y.mesh.cell_area)
    xb = w @ x / w.sum()
    qb = w @ q / w.sum()
    p0, q0 = x - xb, q - qb
    cross = np.sum(w * (p0[:, 0] * q0[:, 1] - p0[:, 1] * q0[:, 0]))
    dot = np.sum(w * np.sum(p0 * q0, axis=1))
    theta = float(np.arctan2(cross, dot))
    return RigidMotion(theta, qb - rotation(theta) @ xb)


def fit_residual(cells, y: CellField, motion: RigidMotion) -> float:
    cells = np.atleast_1d(np.asarray(cells, dtype=int))
    x = y.mesh.centers[cells]
    r = y.evaluate(cells, x) - motion(x)
    return float(np.sum(y.mesh.cell_area * np.sum(r * r, axis=1)))


def skew_from_pair(m1: RigidMotion, m2: RigidMotion, eps: float):
    """omega with R2 = R1 (Id + sqrt(eps) omega J) + O(eps), and the remainder norm."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    se = np.sqrt(eps)
    omega = float(wrap_angle(m2.theta - m1.theta)) / se
    rem = m2.R - m1.R @ (np.eye(2) + se * omega * J)
    return omega, float(np.sqrt(np.sum(rem * rem)))


@dataclass(frozen=True)
class Projection:
    v: DisplacementField
    distance: float
    motion: PiecewiseInfinitesimalMotion
    degenerate: tuple  # components fitted by translation only


def project_infinitesimal(u: CellField, P: CacciopPartition, T: PiecewiseRigidMotion,
                          g: CellField) -> Projection:
    """v = u + grad T . m, m in A(P), minimizing the discrete L2 distance to g."""
    mesh = u.mesh
    if g.mesh != mesh or P.mesh != mesh or T.partition.mesh != mesh:
        raise ValueError("u, g, P, T must share one mesh")
    if T.n_components != P.n_components:
        raise ValueError("partition and rigid motion disagree on the component count")
    w = _weights(mesh)
    x = mesh.centers
    r = u.at_centers() - g.at_centers()
    omega = np.zeros(P.n_components)
    dvec = np.zeros((P.n_components, 2))
    degenerate = []
    R = T.R
    for j in range(P.n_components):
        cells = P.cells(j)
        cells = cells[w[cells] > 0]
        if cells.size == 0:
            degenerate.append(j)
            continue
        target = -(r[cells] @ R[j])  # -R_j^T r_c, row-wise
        if cells.size == 1:
            degenerate.append(j)
            dvec[j] = target[0]
            continue
        xc = x[cells]
        A = np.zeros((2 * cells.size, 3))
        A[0::2, 0] = -xc[:, 1]
        A[1::2, 0] = xc[:, 0]
        A[0::2, 1] = 1.0
        A[1::2, 2] = 1.0
        sol, *_ = np.linalg.lstsq(A, target.ravel(), rcond=None)
        omega[j], dvec[j] = sol[0], sol[1:]
    m = PiecewiseInfinitesimalMotion(P, omega, dvec)
    v = add_infinitesimal(u, T, m)
    diff = v.at_centers() - g.at_centers()
    dist = float(np.sqrt(np.sum(w * np.sum(diff * diff, axis=1))))
    return Projection(v, dist, m, tuple(degenerate))


def orthogonality_residual(v: CellField, g: CellField, P: CacciopPartition, T: PiecewiseRigidMotion) -> float:
    """max over components and basis motions of |<v - g, grad T . m>| / (|v - g| |grad T . m|)."""
    mesh = v.mesh
    w = _weights(mesh)
    x = mesh.centers
    diff = v.at_centers() - g.at_centers()
    nd = np.sqrt(np.sum(w * np.sum(diff * diff, axis=1)))
    if nd == 0:
        return 0.0
    worst = 0.0
    for j in range(P.n_components):
        cells = P.cells(j)
        Rj = T.R[j]
        for basis in (lambda p: p @ J.T, lambda p: np.tile([1.0, 0.0], (len(p), 1)),
                      lambda p: np.tile([0.0, 1.0], (len(p), 1))):
            mvals = basis(x[cells]) @ Rj.T
            nm = np.sqrt(np.sum(w[cells] * np.sum(mvals * mvals, axis=1)))
            if nm == 0:
                continue
            ip = np.sum(w[cells] * np.sum(diff[cells] * mvals, axis=1))
            worst = max(worst, abs(ip) / (nd * nm))
    return float(worst)
