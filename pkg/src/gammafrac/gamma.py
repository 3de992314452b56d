"""Numerical Gamma-convergence harness: recovery sequences, liminf checks,
rate fits and axis-slicing measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density import DEFAULT_M, DIST2, EnergyDensity
from .energy import LimitTriple, energy_limit, energy_nonlinear
from .mesh import HORIZONTAL, VERTICAL, CellField, DiscreteDeformation, slice_restriction


def _admissible_scale(base: np.ndarray, direction: np.ndarray, M: float) -> float:
    """Largest s >= 0 with |base + s direction| <= M row-wise (norms are convex in s)."""
    nb = np.linalg.norm(base, axis=1)
    if np.any(nb > M):
        return 0.0
    # |b + s v|^2 = M^2 solved for the positive root
    a = np.sum(direction * direction, axis=1)
    b = 2 * np.sum(base * direction, axis=1)
    c = nb**2 - M**2
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(a > 0, (-b + np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))) / (2 * a), np.inf)
    return float(root.min(initial=np.inf))


def admissible_eps(t: LimitTriple, M: float = DEFAULT_M) -> float:
    """Supremum of eps for which T + sqrt(eps) u satisfies the |grad y|, |y| <= M box."""
    u, T = t.u, t.T
    if not np.all(np.isfinite(u.F)) or not np.all(np.isfinite(u.d)):
        return 0.0
    R = T.cell_rotations()
    s1 = _admissible_scale(R.reshape(-1, 4), u.F.reshape(-1, 4), M)
    mesh = u.mesh
    cells = np.repeat(np.arange(mesh.n_cells), 4)
    pts = mesh.corners.reshape(-1, 2)
    Tv = np.einsum("cij,cj->ci", R[cells], pts) + T.cell_offsets()[cells]
    uv = u.evaluate(cells, pts)
    s2 = _admissible_scale(Tv, uv, M)
    s = min(s1, s2)
    return s * s


def recovery_sequence(t: LimitTriple, eps_list, M: float = DEFAULT_M) -> list:
    """y_k = T + sqrt(eps_k) u cell-wise, flagged on u's cracks and the partition interfaces."""
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size == 0 or np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    emax = admissible_eps(t, M)
    if eps.max() > emax:
        raise ValueError(f"eps = {eps.max():g} violates the M = {M:g} bound; admissible range is "
                         f"0 < eps <= {emax:.6g}")
    R, b = t.T.cell_rotations(), t.T.cell_offsets()
    flags = t.u.open | t.P.interface_facets
    out = []
    for e in eps:
        se = math.sqrt(e)
        out.append(DiscreteDeformation(t.u.mesh, R + se * t.u.F, b + se * t.u.d, flags, M=M))
    return out


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    n_used: int
    n_dropped: int = 0
    exact: bool = False  # every gap vanished

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "n_used": self.n_used, "n_dropped": self.n_dropped, "exact": self.exact}


def rate_fit(pairs) -> RateFit:
    """Least-squares slope of log(gap) against log(eps); zero gaps are dropped."""
    pairs = [(float(e), abs(float(g))) for e, g in pairs]
    if len(pairs) < 3:
        raise ValueError("need at least 3 (eps, gap) pairs")
    if any(e <= 0 for e, _ in pairs):
        raise ValueError("eps must be positive")
    used = [(e, g) for e, g in pairs if g > 0]
    dropped = len(pairs) - len(used)
    if not used:
        return RateFit(math.inf, -math.inf, 0.0, 0, dropped, exact=True)
    if len(used) < 2:
        raise ValueError("fewer than 2 nonzero gaps; slope undetermined")
    x = np.log([e for e, _ in used])
    y = np.log([g for _, g in used])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ [slope, icpt] - y) ** 2)))
    return RateFit(float(slope), float(icpt), res, len(used), dropped)


def recovery_rate(t: LimitTriple, eps_list, density: EnergyDensity = DIST2, M: float = DEFAULT_M):
    """(rows, fit) for |E_eps(y_eps) - E(t)| along the recovery sequence."""
    target = energy_limit(t, density, check=False).total
    rows = []
    for e, y in zip(eps_list, recovery_sequence(t, eps_list, M)):
        en = energy_nonlinear(y, e, density, M)
        rows.append({"eps": float(e), "energy": en.total, "bulk": en.bulk, "surface": en.inner_crack,
                     "limit": target, "gap": abs(en.total - target)})
    return rows, rate_fit([(r["eps"], r["gap"]) for r in rows])


@dataclass
class LiminfReport:
    status: str  # "pass", "fail" or "inapplicable"
    lhs: float
    rhs: float
    rows: list = field(default_factory=list)
    problems: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"status": self.status, "lhs": self.lhs, "rhs": self.rhs, "rows": self.rows,
                "problems": self.problems}


def _center_distance(a: CellField, b: CellField) -> float:
    w = a.mesh.cell_area * a.mesh.in_omega
    diff = a.at_centers() - b.at_centers()
    return float(np.sqrt(np.sum(w * np.sum(diff * diff, axis=1))))


def liminf_check(t: LimitTriple, seq, density: EnergyDensity = DIST2, tol: Optional[float] = None,
                 tail: Optional[int] = None, c_grad: float = 1e3, conv_tol: float = 1e-3,
                 M: float = DEFAULT_M) -> LiminfReport:
    """Check min over the tail of E_eps(y_k) >= E(t) - tol.

    ``seq`` holds (eps_k, y_k, (u_k, P_k, T_k)). Diagnostics: u_k must agree with
    (y_k - T_k)/sqrt(eps_k) on Omega, eps_k^(1/8) |grad u_k|_inf <= c_grad, and the
    last triple must be close to t (partition equal, L2 distances <= conv_tol
    relative). Failed diagnostics turn the result into "inapplicable".

    The default ``tol`` is sqrt(eps_min) (1 + E(t)): a finite tail only sees the
    inequality up to the O(sqrt(eps)) linearization remainder.
    """
    seq = list(seq)
    if not seq:
        raise ValueError("empty sequence")
    rhs = energy_limit(t, density, check=False).total
    problems, rows = [], []
    omega = t.u.mesh.in_omega
    for k, (eps, y, (uk, Pk, Tk)) in enumerate(seq):
        en = energy_nonlinear(y, eps, density, M)
        se = math.sqrt(eps)
        R, b = Tk.cell_rotations(), Tk.cell_offsets()
        x = y.mesh.centers
        resc = (y.at_centers() - np.einsum("cij,cj->ci", R, x) - b) / se
        gap = float(np.abs(resc - uk.at_centers())[omega].max())
        scale = 1.0 + float(np.abs(uk.at_centers()[omega]).max())
        grad = float(np.sqrt(np.sum(uk.F[omega] ** 2, axis=(1, 2))).max())
        rows.append({"eps": eps, "energy": en.total, "bulk": en.bulk, "surface": en.inner_crack,
                     "ae_gap": gap, "grad_bound": grad * eps**0.125})
        if gap > 1e-6 * scale:
            problems.append(f"entry {k}: u_k differs from (y_k - T_k)/sqrt(eps) by {gap:.3g}")
        if grad * eps**0.125 > c_grad:
            problems.append(f"entry {k}: |grad u_k| eps^(1/8) = {grad * eps**0.125:.3g} exceeds {c_grad:g}")
    _, y_last, (u_last, P_last, T_last) = seq[-1]
    if not P_last.same_as(t.P):
        problems.append("last partition differs from P")
    else:
        dist_T = float(np.abs(T_last.cell_rotations() - t.T.cell_rotations()).max()
                       + np.abs(T_last.cell_offsets() - t.T.cell_offsets()).max())
        if dist_T > conv_tol:
            problems.append(f"last rigid motion is {dist_T:.3g} away from T")
    dist_u = _center_distance(u_last, t.u)
    scale_u = 1.0 + math.sqrt(float(np.sum(t.u.mesh.cell_area * omega * np.sum(t.u.at_centers() ** 2, axis=1))))
    if dist_u > conv_tol * scale_u:
        problems.append(f"last u_k is {dist_u:.3g} away from u in L2")
    window = rows[-tail:] if tail else rows
    lhs = min(r["energy"] for r in window)
    if tol is None:
        tol = math.sqrt(min(r["eps"] for r in window)) * (1.0 + abs(rhs))
    if problems:
        status = "inapplicable"
    else:
        status = "pass" if lhs >= rhs - tol else "fail"
    return LiminfReport(status, lhs, rhs, rows, problems)


# --- slicing ----------------------------------------------------------------

def theta(t, sigma: float):
    """min(t / sigma, 1); identically 1 for sigma = 0."""
    t = np.asarray(t, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.ones_like(t)
    with np.errstate(over="ignore"):  # tiny sigma saturates at 1
        return np.minimum(t / sigma, 1.0)


def _axis(xi) -> int:
    if isinstance(xi, str):
        table = {"e1": VERTICAL, "x": VERTICAL, "1": VERTICAL, "e2": HORIZONTAL, "y": HORIZONTAL, "2": HORIZONTAL}
        if xi.lower() not in table:
            raise ValueError(f"unknown direction {xi!r}; use e1 or e2")
        return table[xi.lower()]
    if isinstance(xi, (int, np.integer)) and xi in (0, 1):
        return int(xi)
    v = np.asarray(xi, dtype=float).ravel()
    if v.shape == (2,) and np.allclose(np.abs(v), [1, 0]):
        return VERTICAL
    if v.shape == (2,) and np.allclose(np.abs(v), [0, 1]):
        return HORIZONTAL
    raise ValueError("only the axis directions e1, e2 are supported")


def _region_mask(u: CellField, region) -> np.ndarray:
    mesh = u.mesh
    if region is None:
        return np.ones(mesh.n_facets, dtype=bool)
    if callable(region):
        return np.asarray(region(mesh.facet_mid), dtype=bool)
    region = np.asarray(region)
    if region.dtype == bool:
        return region
    x0, x1, y0, y1 = map(float, region)
    p = mesh.facet_mid
    return (p[:, 0] > x0) & (p[:, 0] < x1) & (p[:, 1] > y0) & (p[:, 1] < y1)


def slice_measure(u: CellField, xi, sigma: float, region=None, tau: Optional[float] = None) -> float:
    """Sum over axis slices of theta_sigma(|[u] . xi|) at slice jumps, times slice width.

    Jumps count where a facet is open and |[u] . xi| > tau (default: the field's
    continuity tolerance). ``region`` is a facet mask, a predicate on facet
    midpoints, or a box (x0, x1, y0, y1).
    """
    axis = _axis(xi)
    mesh = u.mesh
    tau = u.tau_cont if tau is None else tau
    inside = _region_mask(u, region)
    n = mesh.ny if axis == VERTICAL else mesh.nx
    fac_all = np.flatnonzero(u.open & (mesh.facet_axis == axis))
    total = 0.0
    for s in range(n):
        sl = slice_restriction(u, axis, s)
        fac = fac_all[mesh.facet_slot[fac_all] == s]
        h = np.abs(sl.jump_height)
        keep = (h > tau) & inside[fac]
        total += sl.width * float(np.sum(theta(h[keep], sigma)))
    return total


@dataclass
class LscReport:
    holds: bool
    limit_value: float
    tail_min: float
    values: list
    distances: list

    def to_dict(self) -> dict:
        return {"holds": self.holds, "limit_value": self.limit_value, "tail_min": self.tail_min,
                "values": self.values, "distances": self.distances}


def lsc_spotcheck(seq, u: CellField, xi, sigma: float, region=None, tail: Optional[int] = None,
                  tol: float = 1e-12) -> LscReport:
    """slice_measure(u) <= min over the tail of slice_measure(u_k) + tol."""
    seq = list(seq)
    if not seq:
        raise ValueError("empty sequence")
    vals = [slice_measure(v, xi, sigma, region) for v in seq]
    dists = [_center_distance(v, u) for v in seq]
    lim = slice_measure(u, xi, sigma, region)
    window = vals[-tail:] if tail else vals
    m = min(window)
    return LscReport(lim <= m + tol, lim, m, vals, dists)
