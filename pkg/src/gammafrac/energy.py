"""Energy functionals on discrete fields: nonlinear Griffith energy, its auxiliary
truncation, the linearized limit over triples, segmentation energy and loads.

Bulk integrals use one-point (cell-center) quadrature over the cells of
Omega = (0, l) x (0, 1); collar cells carry no bulk energy. Surface terms
count every open facet of the mesh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import DEFAULT_M, DIST2, EnergyDensity, check_box, dist_so2, hessian_q
from .mesh import CellField, DisplacementField, jump_set_measure
from .partition import CacciopPartition, is_coarser
from .rigid import PiecewiseRigidMotion, project_infinitesimal


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float = 0.0
    inner_crack: float = 0.0
    segmentation_boundary: float = 0.0
    load: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def total(self) -> float:
        return self.bulk + self.inner_crack + self.segmentation_boundary + self.load

    @property
    def finite(self) -> bool:
        return math.isfinite(self.total)

    @classmethod
    def infinite(cls, reason: str) -> "EnergyBreakdown":
        return cls(bulk=math.inf, info={"reason": reason})

    def as_row(self) -> dict:
        return {"bulk": self.bulk, "inner_crack": self.inner_crack,
                "segmentation_boundary": self.segmentation_boundary, "load": self.load,
                "total": self.total}


@dataclass(frozen=True, eq=False)
class LimitTriple:
    """(u, P, T): displacement, Caccioppoli partition, piecewise rigid motion."""

    u: DisplacementField
    P: CacciopPartition
    T: PiecewiseRigidMotion

    def __post_init__(self):
        if not (self.u.mesh == self.P.mesh == self.T.partition.mesh):
            raise ValueError("triple components live on different meshes")
        if self.T.n_components != self.P.n_components:
            raise ValueError("P and T disagree on the number of components")


def _omega_weights(mesh) -> np.ndarray:
    return mesh.cell_area * mesh.in_omega.astype(float)


def bulk_nonlinear(y: CellField, eps: float, density: EnergyDensity = DIST2) -> float:
    return float(np.sum(_omega_weights(y.mesh) * density(y.F)) / eps)


def energy_nonlinear(y: CellField, eps: float, density: EnergyDensity = DIST2,
                     M: float = DEFAULT_M) -> EnergyBreakdown:
    """E_eps(y) = (1/eps) int W(grad y) + H^1(J_y)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    check_box(y.F, M)
    return EnergyBreakdown(bulk=bulk_nonlinear(y, eps, density), inner_crack=jump_set_measure(y))


def _dist_to_boundary(mesh, pts) -> np.ndarray:
    x, z = pts[:, 0], pts[:, 1]
    return np.minimum.reduce([x, mesh.l - x, z, 1.0 - z])


def energy_auxiliary(y: CellField, eps: float, rho: float, shrink: bool = True,
                     density: EnergyDensity = DIST2) -> EnergyBreakdown:
    """Bulk term plus truncated surface term min(|[y]| / (sqrt(eps) rho), 1) per open facet.

    With ``shrink`` both terms are restricted to Omega_rho (cell centers resp.
    facet midpoints farther than rho from the boundary of Omega).
    """
    if eps <= 0 or rho <= 0:
        raise ValueError("eps and rho must be positive")
    mesh = y.mesh
    if rho >= 0.5 * min(mesh.l, 1.0):
        raise ValueError(f"rho = {rho} is not smaller than half the domain width")
    w = _omega_weights(mesh)
    facets = y.open.copy()
    if shrink:
        w = w * (_dist_to_boundary(mesh, mesh.centers) > rho)
        facets &= _dist_to_boundary(mesh, mesh.facet_mid) > rho
    bulk = float(np.sum(w * density(y.F)) / eps)
    heights = np.linalg.norm(y.jumps()[facets], axis=1)
    trunc = np.minimum(heights / (np.sqrt(eps) * rho), 1.0)
    return EnergyBreakdown(bulk=bulk, inner_crack=float(np.sum(trunc * mesh.facet_length[facets])))


def _limit_bulk_density(t: LimitTriple, density: EnergyDensity) -> np.ndarray:
    Q = hessian_q(density)
    G = np.swapaxes(t.T.cell_rotations(), -1, -2) @ t.u.F
    return 0.5 * Q(G)


def energy_limit(t: LimitTriple, density: EnergyDensity = DIST2, check: bool = True) -> EnergyBreakdown:
    """int Q(e(grad T^T grad u))/2 + H^1(J_u minus interfaces) + H^1(interfaces inside Omega).

    With ``check`` the per-component form is evaluated as well and stored in
    ``info['per_component_total']``.
    """
    mesh = t.u.mesh
    dens = _limit_bulk_density(t, density)
    w = _omega_weights(mesh)
    bulk = float(np.sum(w * dens))
    iface = t.P.interface_facets
    inner = float(mesh.facet_length[t.u.open & ~iface].sum())
    seg = t.P.interior_interface_length()
    info = {}
    if check:
        info["per_component_total"] = energy_limit_per_component(t, density, dens).sum()
    return EnergyBreakdown(bulk=bulk, inner_crack=inner, segmentation_boundary=seg, info=info)


def energy_limit_per_component(t: LimitTriple, density: EnergyDensity = DIST2, dens=None) -> np.ndarray:
    """Per-component terms int_{P_j} Q/2 + H^1(J_u n (P_j)^1) + H^1(dP_j n Omega)/2."""
    mesh = t.u.mesh
    if dens is None:
        dens = _limit_bulk_density(t, density)
    w = _omega_weights(mesh)
    _, inner_perim, _ = t.P.perimeters()
    out = np.zeros(t.P.n_components)
    for j in range(t.P.n_components):
        cells = t.P.cells(j)
        crack = float(mesh.facet_length[t.u.open & t.P.density_one_facets(j)].sum())
        out[j] = float(np.sum(w[cells] * dens[cells])) + crack + 0.5 * inner_perim[j]
    return out


def energy_seg(y: CellField, tol: float = 1e-8) -> float:
    """H^1(J_T) if y is a piecewise rigid motion T (within tol), else +inf."""
    if float(dist_so2(y.F).max()) > tol:
        return math.inf
    if y.continuity_residual() > max(tol, y.tau_cont):
        return math.inf
    jumps = y.endpoint_gaps() > max(tol, y.tau_cont)
    return float(y.mesh.facet_length[jumps].sum())


def l2_distance_sq(y: CellField, f: CellField) -> float:
    diff = y.at_centers() - f.at_centers()
    return float(np.sum(_omega_weights(y.mesh) * np.sum(diff * diff, axis=1)))


def energy_loaded(y: CellField, eps: float, lam: float, f: CellField,
                  density: EnergyDensity = DIST2, M: float = DEFAULT_M) -> EnergyBreakdown:
    """F_eps(y) = E_eps(y) + (lam/eps) |y - f|^2_{L2}."""
    if f.mesh != y.mesh:
        raise ValueError("y and f live on different meshes")
    base = energy_nonlinear(y, eps, density, M)
    return EnergyBreakdown(base.bulk, base.inner_crack, 0.0, lam / eps * l2_distance_sq(y, f))


@dataclass(frozen=True, eq=False)
class LoadConstraint:
    """The class C_g: triples with T = T_g and P_g coarser than P."""

    T_g: PiecewiseRigidMotion
    P_g: CacciopPartition


def same_rigid_motion(T1: PiecewiseRigidMotion, T2: PiecewiseRigidMotion, tol: float = 1e-12) -> bool:
    """Cell-wise equality of two piecewise rigid motions as maps."""
    R1, R2 = T1.cell_rotations(), T2.cell_rotations()
    b1, b2 = T1.cell_offsets(), T2.cell_offsets()
    return bool(np.abs(R1 - R2).max() <= tol and np.abs(b1 - b2).max() <= tol)


def constraint_violation(t: LimitTriple, constraint: LoadConstraint, tol: float = 1e-12):
    """None if t lies in C_g, else a short reason."""
    if not same_rigid_motion(t.T, constraint.T_g, tol):
        return "T differs from T_g"
    if not is_coarser(constraint.P_g, t.P):
        return "P_g is not coarser than P"
    return None


def energy_loaded_limit(t: LimitTriple, lam: float, g: CellField, constraint: LoadConstraint,
                        density: EnergyDensity = DIST2) -> EnergyBreakdown:
    """F_g(t): energy_limit plus lam * min over u + grad T A(P) of |v - g|^2, or +inf outside C_g."""
    reason = constraint_violation(t, constraint)
    if reason is not None:
        return EnergyBreakdown.infinite(reason)
    base = energy_limit(t, density, check=False)
    proj = project_infinitesimal(t.u, t.P, t.T, g)
    return EnergyBreakdown(base.bulk, base.inner_crack, base.segmentation_boundary,
                           lam * proj.distance**2,
                           info={"projection_distance": proj.distance, "degenerate": proj.degenerate})


def identity_triple(mesh) -> LimitTriple:
    P = CacciopPartition.single(mesh)
    u = DisplacementField(mesh, np.zeros((mesh.n_cells, 2, 2)), np.zeros((mesh.n_cells, 2)),
                          np.zeros(mesh.n_facets, dtype=bool))
    return LimitTriple(u, P, PiecewiseRigidMotion.identity(P))

