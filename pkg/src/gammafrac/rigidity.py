"""Recovering structure from deformations: piecewise rigid decomposition,
rescaled displacements, coarsest partitions of eps-indexed sequences and the
concave majorant used for the GSBD compactness criterion.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .density import dist_so2
from .mesh import CellField, DisplacementField
from .partition import CacciopPartition, merge, partition_to_dict
from .rigid import PiecewiseRigidMotion, fit_rigid


class NotPiecewiseRigid(ValueError):
    """Some cell gradient is farther than tol from SO(2)."""


def piecewise_rigid_decompose(y: CellField, tol: float = 1e-8):
    """Partition and piecewise rigid motion of a deformation that is rigid on every cell.

    Adjacent cells join iff their facet is closed and the two affine maps agree on
    it within ``tol`` (checked at both facet endpoints). Components are the
    connected classes of the facet graph; each gets its Procrustes fit.
    """
    strain = dist_so2(y.F)
    worst = int(np.argmax(strain))
    if strain[worst] > tol:
        raise NotPiecewiseRigid(f"cell {worst} has dist(F, SO(2)) = {strain[worst]:.3g} > tol = {tol:g}")
    mesh = y.mesh
    join = ~y.open & (y.endpoint_gaps() <= tol)
    fc = mesh.facet_cells[join]
    graph = coo_matrix((np.ones(len(fc)), (fc[:, 0], fc[:, 1])), shape=(mesh.n_cells, mesh.n_cells))
    _, labels = connected_components(graph, directed=False)
    P = CacciopPartition.from_labels(mesh, labels)
    T = PiecewiseRigidMotion.from_motions(P, [fit_rigid(P.cells(j), y) for j in range(P.n_components)])
    return P, T


def rescaled_displacement(y: CellField, T: PiecewiseRigidMotion, eps: float) -> DisplacementField:
    """u = (y - T) / sqrt(eps) cell-wise; y's cracks plus partition interfaces are flagged."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if T.partition.mesh != y.mesh:
        raise ValueError("T and y live on different meshes")
    se = np.sqrt(eps)
    F = (y.F - T.cell_rotations()) / se
    d = (y.d - T.cell_offsets()) / se
    return DisplacementField(y.mesh, F, d, y.open | T.partition.interface_facets)


def scaled_separation(T: PiecewiseRigidMotion, i: int, j: int, eps: float) -> float:
    """(|R_i - R_j| + |b_i - b_j|) / sqrt(eps), Frobenius resp. Euclidean norms."""
    dR = T.R[i] - T.R[j]
    return float((np.sqrt(np.sum(dR * dR)) + np.linalg.norm(T.b[i] - T.b[j])) / np.sqrt(eps))


@dataclass
class CoarsestResult:
    partition: CacciopPartition
    motion: PiecewiseRigidMotion  # last entry's motions, one representative per merged class
    decisions: list = field(default_factory=list)
    band: tuple = (0.0, np.inf)  # any threshold in [lo, hi) reproduces the output

    def trace(self) -> dict:
        return {
            "partition": partition_to_dict(self.partition),
            "n_components": self.partition.n_components,
            "motions": self.motion.to_dict()["motions"],
            "decisions": self.decisions,
            "threshold_band": [self.band[0], self.band[1]],
        }


def coarsest_partition(seq, c_star: float = 10.0, tail: int = 3) -> CoarsestResult:
    """Merge components whose scaled separation stays <= c_star on the last ``tail`` entries.

    ``seq`` holds (eps_k, P_k, T_k); components correspond across k by their
    area-ordered index. The merge is applied to the last partition. The
    representative motion of a merged class is that of its lowest-index
    member, which keeps the rescaled displacement bounded on the class.
    """
    seq = list(seq)
    if not seq:
        raise ValueError("empty sequence")
    counts = {P.n_components for _, P, _ in seq}
    if len(counts) != 1:
        raise ValueError(f"inconsistent component counts across the sequence: {sorted(counts)}")
    for _, P, T in seq:
        if T.n_components != P.n_components or P.mesh != seq[-1][1].mesh:
            raise ValueError("each entry needs matching P, T on a common mesh")
    k = counts.pop()
    window = seq[-tail:]
    decisions, pairs = [], []
    lo, hi = 0.0, np.inf
    for i in range(k):
        for j in range(i + 1, k):
            ratios = [scaled_separation(T, i, j, eps) for eps, _, T in window]
            worst = max(ratios)
            merged = worst <= c_star
            decisions.append({"i": i, "j": j, "eps": [e for e, _, _ in window],
                              "scaled_separation": ratios, "merged": merged})
            if merged:
                pairs.append((i, j))
                lo = max(lo, worst)
            else:
                hi = min(hi, worst)
    _, P_last, T_last = seq[-1]
    merged_P = merge(P_last, pairs)
    new_label = np.array([merged_P.labels[P_last.cells(j)[0]] for j in range(k)])
    reps = [int(np.flatnonzero(new_label == n).min()) for n in range(merged_P.n_components)]
    motion = PiecewiseRigidMotion(merged_P, T_last.thetas[reps], T_last.b[reps])
    return CoarsestResult(merged_P, motion, decisions, (lo, hi))


@dataclass(frozen=True)
class ConcaveMajorant:
    """Piecewise linear psi through ``knots`` (x ascending) continued with the last slope."""

    x: np.ndarray
    y: np.ndarray

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.y) / np.diff(self.x)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.interp(t, self.x, self.y)
        beyond = self.y[-1] + self.slopes[-1] * (t - self.x[-1])
        return np.where(t > self.x[-1], beyond, inside)


def _f_knots(b: np.ndarray):
    """Knots of the piecewise affine f with f(0) = 0 and f(b_i) = 2^i, i = 1..n."""
    return np.concatenate([[0.0], b]), np.concatenate([[0.0], 2.0 ** np.arange(1, len(b) + 1)])


def build_concave_majorant(b) -> ConcaveMajorant:
    """Increasing concave psi <= f with psi(b_i) <= 2^i, by tangent extension.

    Walking right from b_1: where f turns convex at b_i, psi follows the left
    tangent line until it meets f again, then follows f; if it never meets f
    within the data range it stays on the tangent.
    """
    b = np.asarray(b, dtype=float).ravel()
    if b.size == 0 or b[0] <= 0 or np.any(np.diff(b) <= 0):
        raise ValueError("b must be positive and strictly increasing")
    fx, fy = _f_knots(b)
    n = len(fx) - 1
    xs, ys = [fx[0], fx[1]], [fy[0], fy[1]]
    i = 1
    while i < n:
        s_left = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        s_right = (fy[i + 1] - fy[i]) / (fx[i + 1] - fx[i])
        if s_left >= s_right:
            xs.append(fx[i + 1])
            ys.append(fy[i + 1])
            i += 1
            continue
        x0, y0 = fx[i], fy[i]
        meet = None
        for k in range(i, n):
            # g = f - line is affine on [fx[k], fx[k+1]]; it is > 0 just right of b_i
            g0 = fy[k] - (y0 + s_left * (fx[k] - x0))
            g1 = fy[k + 1] - (y0 + s_left * (fx[k + 1] - x0))
            if g1 <= 0:
                tbar = fx[k] + (fx[k + 1] - fx[k]) * g0 / (g0 - g1) if g0 > 0 else fx[k]
                meet = (tbar, k + 1)
                break
        if meet is None:
            xs.append(fx[n])
            ys.append(y0 + s_left * (fx[n] - x0))
            break
        tbar, j = meet
        if tbar > xs[-1]:
            xs.append(tbar)
            ys.append(y0 + s_left * (tbar - x0))
        if fx[j] > xs[-1]:
            xs.append(fx[j])
            ys.append(fy[j])
        i = j
    return ConcaveMajorant(np.array(xs), np.array(ys))


def piecewise_f(b, t) -> np.ndarray:
    """The affine interpolant f of (0, 0), (b_i, 2^i); extended with its last slope."""
    fx, fy = _f_knots(np.asarray(b, dtype=float))
    t = np.asarray(t, dtype=float)
    last = (fy[-1] - fy[-2]) / (fx[-1] - fx[-2])
    return np.where(t > fx[-1], fy[-1] + last * (t - fx[-1]), np.interp(t, fx, fy))


def concave_envelope(b, t) -> np.ndarray:
    """Least concave majorant of f on [0, b_n] (upper hull of its knots), sampled at t."""
    fx, fy = _f_knots(np.asarray(b, dtype=float))
    hull = []
    for p in zip(fx, fy):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    hx, hy = np.array(hull).T
    return np.interp(t, hx, hy)


def three_block_sequence(eps_list, plan=(0.6, -0.8), nx: int = 48, ny: int = 16):
    """Deformations of (0,3) x (0,1): id on the left block, id + sqrt(eps) plan in the
    middle, id + eps^(1/4) (1, 1) on the right. Returns [(eps, y), ...]."""
    from .mesh import GridMesh, piecewise_field

    if nx % 3:
        raise ValueError("nx must be divisible by 3")
    mesh = GridMesh(3.0, nx, ny)
    labels = np.minimum((mesh.centers[:, 0] // 1.0).astype(int), 2)
    plan = np.asarray(plan, dtype=float)
    out = []
    for eps in eps_list:
        maps = [(np.eye(2), np.zeros(2)), (np.eye(2), np.sqrt(eps) * plan),
                (np.eye(2), eps**0.25 * np.ones(2))]
        out.append((float(eps), piecewise_field(mesh, labels, maps)))
    return out


def coarsest_from_deformations(seq, c_star: float = 10.0, tail: int = 3, tol: float = 1e-8):
    """Decompose each (eps, y) and compute the coarsest partition of the sequence.

    Returns (result, rescaled displacement of the last entry w.r.t. the merged motion).
    """
    seq = list(seq)
    decomposed = [(eps, *piecewise_rigid_decompose(y, tol)) for eps, y in seq]
    res = coarsest_partition(decomposed, c_star, tail)
    eps, y = seq[-1]
    return res, rescaled_displacement(y, res.motion, eps)
