"""Uniaxial tension/compression of the strip (0, l) x (0, 1).

Boundary data y_1 = (1 + a_eps) x_1 are imposed on collar cells left of 0 and
right of l. Unknowns are written in rescaled form: on cell c the deformation
is y(x) = x + sqrt(eps) (G_c x + q_c), so w = (y - id)/sqrt(eps) is the rescaled
displacement and a = a_eps / sqrt(eps) its boundary strain.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import splu

from .density import DEFAULT_M, EnergyDensity, alpha_and_fa, get_density, hessian_q, sym
from .energy import EnergyBreakdown, energy_nonlinear
from .mesh import (VERTICAL, CellField, DiscreteDeformation, DisplacementField, GridMesh,
                   build_affine, piecewise_field)

log = logging.getLogger(__name__)


def limit_energy_formula(a: float, alpha: float, l: float) -> float:
    """min{alpha l a^2 / 2, 1}."""
    if alpha <= 0 or l <= 0:
        raise ValueError("alpha and l must be positive")
    return min(0.5 * alpha * l * a * a, 1.0)


def crossover_strain(alpha: float, l: float) -> float:
    """Strain where both branches of the limit energy equal 1."""
    return math.sqrt(2.0 / (alpha * l))


def reference_critical_strain(alpha: float, l: float) -> float:
    """sqrt(2 alpha / l). Differs from crossover_strain unless alpha = 1; both are reported."""
    return math.sqrt(2.0 * alpha / l)


@dataclass(frozen=True)
class CleavageProblem:
    """Strip of width l with ``nx`` x ``ny`` cells in Omega and a collar of width eta.

    eta is snapped to a whole number (at least one) of cell columns.
    """

    a_eps: float
    eps: float
    l: float = 1.0
    nx: int = 64
    ny: int = 64
    eta: Optional[float] = None
    density: str = "dist2"
    M: float = DEFAULT_M

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not math.isfinite(self.a_eps):
            raise ValueError("a_eps must be finite")

    @classmethod
    def rescaled(cls, a: float, eps: float, **kw) -> "CleavageProblem":
        return cls(a_eps=a * math.sqrt(eps), eps=eps, **kw)

    @property
    def a(self) -> float:
        return self.a_eps / math.sqrt(self.eps)

    @property
    def collar_columns(self) -> int:
        h = self.l / self.nx
        return max(1, int(round((self.eta if self.eta is not None else h) / h)))

    @property
    def mesh(self) -> GridMesh:
        k = self.collar_columns
        return GridMesh(self.l, self.nx + 2 * k, self.ny, eta=k * self.l / self.nx)

    @property
    def W(self) -> EnergyDensity:
        return get_density(self.density)

    def constants(self):
        """(alpha, F^1) of the density."""
        alpha, F1 = alpha_and_fa(hessian_q(self.W), 1.0)
        return alpha, F1

    def collar_map(self):
        return np.diag([1.0 + self.a_eps, 1.0]), np.zeros(2)

    def crack_columns(self, strict: bool = True) -> list:
        return self.mesh.columns_in(0.0, self.l, strict=strict)

    def header(self) -> dict:
        return {"a_eps": self.a_eps, "a": self.a, "eps": self.eps, "l": self.l, "nx": self.nx,
                "ny": self.ny, "eta": self.mesh.eta, "density": self.density}


@dataclass(frozen=True)
class Classification:
    kind: str  # "Elastic", "Cracked" or "Other"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass
class MinimizerReport:
    problem: CleavageProblem
    energy: EnergyBreakdown
    classification: Classification
    u: DisplacementField
    solver: str
    converged: bool = True
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        alpha, _ = self.problem.constants()
        return {
            "problem": self.problem.header(),
            "solver": self.solver,
            "converged": self.converged,
            "energy": self.energy.as_row(),
            "classification": self.classification.to_dict(),
            "alpha": alpha,
            "limit_formula": limit_energy_formula(self.problem.a, alpha, self.problem.l),
            "a_star_derived": crossover_strain(alpha, self.problem.l),
            "a_crit_reference": reference_critical_strain(alpha, self.problem.l),
            "open_facets": np.flatnonzero(self.u.open).tolist(),
            **self.info,
        }


def rescaled_from(y: CellField, eps: float) -> DisplacementField:
    se = math.sqrt(eps)
    return DisplacementField(y.mesh, (y.F - np.eye(2)) / se, y.d / se, y.open)


def normalize_translations(u: DisplacementField, labels: np.ndarray) -> DisplacementField:
    """Shift u_2 by a constant per label so its cell-center mean over Omega vanishes."""
    mesh = u.mesh
    vals = u.at_centers()[:, 1]
    d = u.d.copy()
    for k in np.unique(labels):
        cells = np.flatnonzero((labels == k) & mesh.in_omega)
        if cells.size:
            d[labels == k, 1] -= vals[cells].mean()
    return DisplacementField(mesh, u.F, d, u.open)


def _column_of(mesh: GridMesh, open_mask: np.ndarray):
    """Index of the single fully open vertical column, or None."""
    ids = np.flatnonzero(open_mask)
    if ids.size == 0 or np.any(mesh.facet_axis[ids] != VERTICAL):
        return None
    cols = np.unique(mesh.facet_line[ids])
    if len(cols) != 1 or ids.size != mesh.ny:
        return None
    return int(cols[0])


def classify(u: CellField, a: float, Fa: np.ndarray, l: float, tol: float = 0.05) -> Classification:
    """Elastic / Cracked / Other tag of a rescaled displacement on a cleavage mesh."""
    mesh = u.mesh
    omega = mesh.in_omega
    strain = sym(u.F[omega])
    vals = u.at_centers()
    x = mesh.centers
    if not u.open.any():
        scale = max(1.0, float(np.linalg.norm(Fa)))
        err = float(np.sqrt(np.sum((strain - Fa) ** 2, axis=(1, 2))).max())
        if err <= tol * scale:
            s = float(np.mean(vals[omega, 1] - (x[omega] @ Fa.T)[:, 1]))
            return Classification("Elastic", {"Fa": Fa.tolist(), "s": s, "strain_error": err})
        return Classification("Other", {"reason": "uncracked but strain differs from F^a",
                                        "strain_error": err})
    col = _column_of(mesh, u.open)
    if col is None:
        return Classification("Other", {"reason": "open facets are not a single vertical column"})
    p = mesh.column_x(col)
    if not (0 < p < l and abs(p) > 1e-12 and abs(p - l) > 1e-12):
        return Classification("Other", {"reason": "crack column on the boundary", "p": p})
    scale = max(1.0, abs(a))
    err = float(np.sqrt(np.sum(strain**2, axis=(1, 2))).max())
    facets = mesh.column_facets(col)
    jump = u.jumps()[facets]
    jump1 = float(jump[:, 0].mean())
    la = l * a
    params = {"p": p, "jump": jump1, "strain_error": err,
              "s": float(vals[omega & (x[:, 0] < p), 1].mean()),
              "t": float(vals[omega & (x[:, 0] > p), 1].mean())}
    if err > tol * scale:
        return Classification("Other", {"reason": "strained pieces beside the crack", **params})
    if abs(jump1 - la) > tol * max(1.0, abs(la)):
        return Classification("Other", {"reason": "crack opening differs from l a", **params})
    return Classification("Cracked", params)


# --- candidate solver -------------------------------------------------------

def _elastic_candidate(prob: CleavageProblem):
    """Affine minimizer with first row (1 + a_eps, 0), started from the linearized strain."""
    W = prob.W
    se = math.sqrt(prob.eps)
    _, F1 = prob.constants()
    Fa = prob.a * F1

    def grad_of(h):
        return np.array([[prob.a, 0.0], [h[0], h[1]]])

    def obj(h):
        return float(W(np.eye(2) + se * grad_of(h))) / prob.eps

    h0 = np.array([2.0 * Fa[0, 1], Fa[1, 1]])
    if prob.a == 0.0:
        h = h0
    else:
        res = minimize(obj, h0, method="BFGS", options={"gtol": 1e-12})
        h = res.x if res.fun <= obj(h0) else h0
    F = np.eye(2) + se * grad_of(h)
    return build_affine(prob.mesh, F, (0.0, 0.0), M=prob.M)


def _cracked_candidate(prob: CleavageProblem, col: int) -> DiscreteDeformation:
    mesh = prob.mesh
    x = mesh.centers[:, 0]
    xc = mesh.column_x(col)
    labels = np.where(x < 0, 0, np.where(x > prob.l, 3, np.where(x < xc, 1, 2)))
    collar = prob.collar_map()
    maps = [collar, (np.eye(2), np.zeros(2)), (np.eye(2), np.array([prob.l * prob.a_eps, 0.0])), collar]
    open_mask = np.zeros(mesh.n_facets, dtype=bool)
    open_mask[mesh.column_facets(col)] = True
    return piecewise_field(mesh, labels, maps, open_mask, M=prob.M)


def _pick_center(cols, energies, mesh, l, tie_tol):
    """Lowest energy; among ties the column closest to l/2, then the leftmost."""
    energies = np.asarray(energies)
    best = energies.min()
    ties = [c for c, e in zip(cols, energies) if e <= best + tie_tol]
    return min(ties, key=lambda c: (abs(mesh.column_x(c) - 0.5 * l), c))


def solve_candidates(prob: CleavageProblem, tol_class: float = 0.05) -> MinimizerReport:
    """Compare the elastic affine competitor with every straight vertical crack."""
    alpha, F1 = prob.constants()
    y_el = _elastic_candidate(prob)
    e_el = energy_nonlinear(y_el, prob.eps, prob.W, prob.M)
    cols = prob.crack_columns()
    crack_energies = []
    for c in cols:
        crack_energies.append(energy_nonlinear(_cracked_candidate(prob, c), prob.eps, prob.W, prob.M).total)
    mesh = prob.mesh
    col = _pick_center(cols, crack_energies, mesh, prob.l, 1e-12)
    y_cr = _cracked_candidate(prob, col)
    e_cr = energy_nonlinear(y_cr, prob.eps, prob.W, prob.M)
    y, e = (y_el, e_el) if e_el.total <= e_cr.total else (y_cr, e_cr)
    u = rescaled_from(y, prob.eps)
    tag = classify(u, prob.a, prob.a * F1, prob.l, tol_class)
    u = normalize_translations(u, _side_labels(mesh, u.open))
    info = {"elastic_energy": e_el.total, "cracked_energy": e_cr.total,
            "crack_energy_spread": float(np.ptp(crack_energies)) if crack_energies else 0.0}
    return MinimizerReport(prob, e, tag, u, "candidates", True, info)


def _side_labels(mesh: GridMesh, open_mask: np.ndarray) -> np.ndarray:
    col = _column_of(mesh, open_mask)
    if col is None:
        return np.zeros(mesh.n_cells, dtype=int)
    return (mesh.centers[:, 0] > mesh.column_x(col)).astype(int)


# --- alternating minimization ----------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """outer_iterations: crack-update rounds; flip_batch: moves accepted per round;
    descent_tol: stopping tolerance on the energy decrease of the bulk descent."""

    outer_iterations: int = 10
    flip_batch: int = 1
    descent_tol: float = 1e-10
    max_descent_steps: int = 60
    moves: str = "column"  # "column" or "facet"


class _BulkSolver:
    """Minimizes the bulk energy over cell-affine fields for a fixed crack set.

    Dofs per cell: G (row-major, 4) then q (2). Collar cells have their first
    row pinned to (a, 0 | 0). Closed facets impose equal midpoint traces.
    Steps solve the KKT system of the quadratic model with Hessian area * Q
    (lifted to gradients) and are globalized by Armijo backtracking.
    """

    def __init__(self, prob: CleavageProblem):
        self.prob = prob
        self.mesh = prob.mesh
        self.W = prob.W
        self.se = math.sqrt(prob.eps)
        n = self.mesh.n_cells
        self.omega = self.mesh.in_omega
        pinned = np.zeros((n, 6), dtype=bool)
        collar = ~self.omega
        pinned[collar, 0] = pinned[collar, 1] = pinned[collar, 4] = True
        self.pinned = pinned.ravel()
        self.free = np.flatnonzero(~self.pinned)
        self.z_pin = np.zeros(6 * n)
        self.z_pin.reshape(n, 6)[collar, 0] = prob.a
        H4 = hessian_q(self.W).on_gradients()
        area = self.mesh.cell_area
        blocks = []
        reg = 1e-10 * float(np.abs(H4).max()) * area
        for c in range(n):
            b = np.zeros((6, 6))
            if self.omega[c]:
                b[:4, :4] = area * H4
            blocks.append(b + reg * np.eye(6))
        self.H = sp.block_diag(blocks, format="csr")
        self._lu_cache = {}

    def unpack(self, z):
        zz = z.reshape(-1, 6)
        return zz[:, :4].reshape(-1, 2, 2), zz[:, 4:]

    def constraints(self, open_mask):
        m = self.mesh
        closed = np.flatnonzero(~open_mask)
        rows, cols, vals = [], [], []
        for r, f in enumerate(closed):
            cm, cp = m.facet_cells[f]
            xm = m.facet_mid[f]
            for k in range(2):
                row = 2 * r + k
                for cell, sgn in ((cp, 1.0), (cm, -1.0)):
                    base = 6 * cell
                    rows += [row, row, row]
                    cols += [base + 2 * k, base + 2 * k + 1, base + 4 + k]
                    vals += [sgn * xm[0], sgn * xm[1], sgn]
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * len(closed), 6 * m.n_cells))

    def _factor(self, open_mask):
        key = open_mask.tobytes()
        if key not in self._lu_cache:
            C = self.constraints(open_mask)
            Cf = C[:, self.free]
            # rows touching pinned dofs only hold between identical collar data
            keep = np.flatnonzero(np.diff(Cf.tocsr().indptr) > 0)
            C, Cf = C[keep], Cf[keep]
            Hf = self.H[self.free][:, self.free]
            gamma = 1e-13 * sp.identity(Cf.shape[0], format="csc")
            K = sp.bmat([[Hf, Cf.T], [Cf, -gamma]], format="csc")
            if len(self._lu_cache) > 64:
                self._lu_cache.clear()
            self._lu_cache[key] = (C, splu(K))
        return self._lu_cache[key]

    def bulk(self, z) -> float:
        G, _ = self.unpack(z)
        Fs = np.eye(2) + self.se * G[self.omega]
        return float(self.mesh.cell_area * np.sum(self.W(Fs)) / self.prob.eps)

    def gradient(self, z) -> np.ndarray:
        G, _ = self.unpack(z)
        g = np.zeros((self.mesh.n_cells, 6))
        Fs = np.eye(2) + self.se * G[self.omega]
        g[self.omega, :4] = (self.mesh.cell_area / self.se * self.W.gradient(Fs)).reshape(-1, 4)
        return g.ravel()

    def solve(self, z, open_mask, tol: float, max_steps: int):
        """Return (z, bulk energy, converged)."""
        C, lu = self._factor(open_mask)
        nf = len(self.free)
        z = z.copy()
        z[self.pinned] = self.z_pin[self.pinned]
        e = self.bulk(z)
        for step in range(max_steps):
            g = self.gradient(z)[self.free]
            rhs = np.concatenate([-g, -(C @ z)])
            sol = lu.solve(rhs)
            dz = np.zeros_like(z)
            dz[self.free] = sol[:nf]
            decrement = -float(g @ sol[:nf])
            if step == 0 and np.abs(C @ z).max(initial=0.0) > 1e-12:
                # restore feasibility with a full step
                z = z + dz
                e = self.bulk(z)
                continue
            if decrement <= tol:
                return z, e, True
            t = 1.0
            while t > 1e-8:
                e_new = self.bulk(z + t * dz)
                if e_new <= e - 1e-4 * t * decrement:
                    break
                t *= 0.5
            else:
                return z, e, abs(decrement) <= 10 * tol
            if e - e_new <= tol:
                z, e = z + t * dz, e_new
                return z, e, True
            z, e = z + t * dz, e_new
        return z, e, False

    def field(self, z, open_mask) -> DiscreteDeformation:
        G, q = self.unpack(z)
        return DiscreteDeformation(self.mesh, np.eye(2) + self.se * G, self.se * q, open_mask, M=self.prob.M)


def _move_sets(prob: CleavageProblem, moves: str) -> list:
    mesh = prob.mesh
    if moves == "column":
        return [(c, mesh.column_facets(c)) for c in prob.crack_columns(strict=False)]
    if moves == "facet":
        xm = mesh.facet_mid[:, 0]
        inside = np.flatnonzero((xm > -1e-12) & (xm < prob.l + 1e-12))
        return [(int(f), np.array([f])) for f in inside]
    raise ValueError(f"unknown move type {moves!r}")


def solve_alternating(prob: CleavageProblem, schedule: Schedule = Schedule(),
                      tol_class: float = 0.05) -> MinimizerReport:
    """Alternate bulk descent for a fixed crack set with greedy crack flips.

    Each round evaluates every move (open or close a facet column, or a single
    facet in ``facet`` mode) by re-solving the bulk problem, then applies up
    to ``flip_batch`` disjoint moves with positive gain, best first. Ties in
    energy go to the move closest to x = l/2.
    """
    mesh = prob.mesh
    _, F1 = prob.constants()
    bs = _BulkSolver(prob)
    length = mesh.facet_length
    n = mesh.n_cells
    z = np.zeros((n, 6))
    init = np.array([[prob.a, 0.0], [2.0 * prob.a * F1[0, 1], prob.a * F1[1, 1]]])
    z[:, :4] = init.ravel()
    z = z.ravel()
    open_mask = np.zeros(mesh.n_facets, dtype=bool)
    tol = schedule.descent_tol
    z, bulk, ok = bs.solve(z, open_mask, tol, schedule.max_descent_steps)
    energy = bulk + float(length[open_mask].sum())
    history = [energy]
    moves = _move_sets(prob, schedule.moves)
    tie_tol = max(10 * tol, 1e-9 * (1 + abs(energy)))
    converged = False
    for _ in range(schedule.outer_iterations):
        trials = []
        for key, facets in moves:
            trial = open_mask.copy()
            trial[facets] = not open_mask[facets].all()
            zt, bt, okt = bs.solve(z, trial, tol, schedule.max_descent_steps)
            trials.append((bt + float(length[trial].sum()), key, facets, trial, zt, okt))
        gains = [energy - t[0] for t in trials]
        if max(gains) <= tie_tol:
            converged = ok
            break
        # best gain first; ties broken toward the middle of the strip
        if schedule.moves == "column":
            center = lambda k: abs(mesh.column_x(k) - 0.5 * prob.l)
        else:
            center = lambda k: abs(mesh.facet_mid[k, 0] - 0.5 * prob.l)
        best = max(gains)
        order = sorted(range(len(trials)),
                       key=lambda i: (gains[i] < best - tie_tol, -round(gains[i] / tie_tol), center(trials[i][1])))
        chosen = [order[0]]
        used = set(trials[order[0]][2].tolist())
        for i in order[1:]:
            if len(chosen) >= schedule.flip_batch or gains[i] <= tie_tol:
                break
            if used.isdisjoint(trials[i][2].tolist()):
                chosen.append(i)
                used.update(trials[i][2].tolist())
        if len(chosen) == 1:
            energy, _, _, open_mask, z, ok = trials[chosen[0]]
        else:
            batch = open_mask.copy()
            for i in chosen:
                batch[trials[i][2]] = trials[i][3][trials[i][2]]
            zb, bulk, okb = bs.solve(z, batch, tol, schedule.max_descent_steps)
            eb = bulk + float(length[batch].sum())
            # moves interact; keep the batch only if it beats the best single move
            if eb <= trials[order[0]][0]:
                energy, open_mask, z, ok = eb, batch, zb, okb
            else:
                energy, _, _, open_mask, z, ok = trials[order[0]]
        history.append(energy)
    y = bs.field(z, open_mask)
    e = energy_nonlinear(y, prob.eps, prob.W, prob.M)
    u = rescaled_from(y, prob.eps)
    tag = classify(u, prob.a, prob.a * F1, prob.l, tol_class)
    u = normalize_translations(u, _side_labels(mesh, u.open))
    if not converged:
        log.warning("alternating solver stopped without convergence (a=%g, eps=%g)", prob.a, prob.eps)
    return MinimizerReport(prob, e, tag, u, "alternating", converged, {"energy_history": history})


# --- sweeps -----------------------------------------------------------------

def sweep_cleavage(a_grid, eps_grid, template: dict, mode: str = "candidates",
                   schedule: Schedule = Schedule(), reports: Optional[list] = None) -> list:
    """One row per (a, eps): solver energies, tags, the limit formula and the discrepancy."""
    if not len(a_grid) or not len(eps_grid):
        raise ValueError("empty grid")
    if mode not in ("candidates", "alternating", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    rows = []
    for eps in eps_grid:
        for a in a_grid:
            prob = CleavageProblem.rescaled(a, eps, **template)
            alpha, _ = prob.constants()
            formula = limit_energy_formula(a, alpha, prob.l)
            row = {"a": float(a), "eps": float(eps), "a_eps": prob.a_eps, "l": prob.l, "nx": prob.nx,
                   "ny": prob.ny, "eta": prob.mesh.eta, "density": prob.density, "mode": mode,
                   "alpha": alpha, "formula": formula}
            if mode in ("candidates", "both"):
                rep = solve_candidates(prob)
                row.update(E_candidates=rep.energy.total, class_candidates=rep.classification.kind,
                           discrepancy=abs(rep.energy.total - formula))
                if reports is not None:
                    reports.append(rep)
            if mode in ("alternating", "both"):
                rep = solve_alternating(prob, schedule)
                row.update(E_alternating=rep.energy.total, class_alternating=rep.classification.kind,
                           converged=rep.converged)
                if mode == "alternating":
                    row["discrepancy"] = abs(rep.energy.total - formula)
                if reports is not None:
                    reports.append(rep)
            rows.append(row)
    rows.sort(key=lambda r: (r["eps"], r["a"]))
    return rows
