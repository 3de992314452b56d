"""Rectangular grid meshes and cell-wise affine fields with facet crack flags.

A field assigns to every cell c an affine map x -> F_c x + d_c (global
coordinates). Cracks live on interior facets: a facet is either open (part of
the jump set) or closed. Jumps are trace differences at facet midpoints,
plus side minus minus side, where the plus side lies in direction +e1 for
vertical facets and +e2 for horizontal ones.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .density import DEFAULT_M, BoxConstraintError, frob

VERTICAL, HORIZONTAL = 0, 1


@dataclass(frozen=True)
class GridMesh:
    """Grid over (-eta, l + eta) x (0, 1) with nx x ny cells.

    Cell c = j * nx + i has lower-left corner (-eta + i*hx, j*hy). Cells whose
    centers lie outside (0, l) form the collar.
    """

    l: float
    nx: int
    ny: int
    eta: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("mesh needs nx, ny >= 2")
        if self.l <= 0 or self.eta < 0:
            raise ValueError("need l > 0 and eta >= 0")

    @property
    def x0(self) -> float:
        return -self.eta

    @property
    def hx(self) -> float:
        return (self.l + 2 * self.eta) / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def header(self) -> dict:
        return {"l": self.l, "nx": self.nx, "ny": self.ny, "eta": self.eta}

    @cached_property
    def centers(self) -> np.ndarray:
        i = np.tile(np.arange(self.nx), self.ny)
        j = np.repeat(np.arange(self.ny), self.nx)
        return np.stack([self.x0 + (i + 0.5) * self.hx, (j + 0.5) * self.hy], -1)

    @cached_property
    def corners(self) -> np.ndarray:
        """(N, 4, 2) cell vertices."""
        c = self.centers[:, None, :]
        off = 0.5 * np.array([[-self.hx, -self.hy], [self.hx, -self.hy],
                              [self.hx, self.hy], [-self.hx, self.hy]])
        return c + off[None]

    @cached_property
    def in_omega(self) -> np.ndarray:
        x = self.centers[:, 0]
        return (x > 0) & (x < self.l)

    @property
    def collar(self) -> np.ndarray:
        return ~self.in_omega

    @cached_property
    def _facets(self):
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        jv, iv = np.meshgrid(np.arange(ny), np.arange(1, nx), indexing="ij")
        jv, iv = jv.ravel(), iv.ravel()
        v_cells = np.stack([jv * nx + iv - 1, jv * nx + iv], -1)
        v_mid = np.stack([self.x0 + iv * hx, (jv + 0.5) * hy], -1)
        v_ends = np.stack([np.stack([self.x0 + iv * hx, jv * hy], -1),
                           np.stack([self.x0 + iv * hx, (jv + 1) * hy], -1)], 1)
        jh, ih = np.meshgrid(np.arange(1, ny), np.arange(nx), indexing="ij")
        jh, ih = jh.ravel(), ih.ravel()
        h_cells = np.stack([(jh - 1) * nx + ih, jh * nx + ih], -1)
        h_mid = np.stack([self.x0 + (ih + 0.5) * hx, jh * hy], -1)
        h_ends = np.stack([np.stack([self.x0 + ih * hx, jh * hy], -1),
                           np.stack([self.x0 + (ih + 1) * hx, jh * hy], -1)], 1)
        return {
            "cells": np.concatenate([v_cells, h_cells]),
            "axis": np.concatenate([np.full(len(iv), VERTICAL), np.full(len(ih), HORIZONTAL)]),
            "mid": np.concatenate([v_mid, h_mid]),
            "ends": np.concatenate([v_ends, h_ends]),
            "length": np.concatenate([np.full(len(iv), hy), np.full(len(ih), hx)]),
            # column index i for vertical facets, row index j for horizontal ones
            "line": np.concatenate([iv, jh]),
            # row j for vertical facets, column i for horizontal ones
            "slot": np.concatenate([jv, ih]),
        }

    @property
    def n_facets(self) -> int:
        return len(self._facets["axis"])

    @property
    def facet_cells(self) -> np.ndarray:
        return self._facets["cells"]

    @property
    def facet_axis(self) -> np.ndarray:
        return self._facets["axis"]

    @property
    def facet_mid(self) -> np.ndarray:
        return self._facets["mid"]

    @property
    def facet_ends(self) -> np.ndarray:
        return self._facets["ends"]

    @property
    def facet_length(self) -> np.ndarray:
        return self._facets["length"]

    @property
    def facet_line(self) -> np.ndarray:
        return self._facets["line"]

    @property
    def facet_slot(self) -> np.ndarray:
        return self._facets["slot"]

    @cached_property
    def boundary_length(self) -> np.ndarray:
        """Per-cell length of facets on the outer mesh boundary."""
        out = np.zeros(self.n_cells)
        i = np.tile(np.arange(self.nx), self.ny)
        j = np.repeat(np.arange(self.ny), self.nx)
        out += self.hy * ((i == 0).astype(float) + (i == self.nx - 1))
        out += self.hx * ((j == 0).astype(float) + (j == self.ny - 1))
        return out

    def column_x(self, i: int) -> float:
        return self.x0 + i * self.hx

    def column_facets(self, i: int) -> np.ndarray:
        """Ids of the vertical facets on the line x = x0 + i*hx (1 <= i <= nx-1)."""
        if not 1 <= i <= self.nx - 1:
            raise ValueError(f"no interior facet column {i}")
        return np.flatnonzero((self.facet_axis == VERTICAL) & (self.facet_line == i))

    def columns_in(self, lo: float, hi: float, strict: bool = True) -> list:
        """Interior facet columns with lo < x < hi (or <= when not strict)."""
        tol = 1e-9 * self.hx
        out = []
        for i in range(1, self.nx):
            x = self.column_x(i)
            if strict and lo + tol < x < hi - tol:
                out.append(i)
            elif not strict and lo - tol <= x <= hi + tol:
                out.append(i)
        return out

    def nearest_column(self, p: float) -> int:
        """Facet column nearest to x = p among those strictly inside (0, l)."""
        if not 0.0 < p < self.l:
            raise ValueError(f"crack position p = {p} outside (0, {self.l})")
        cols = self.columns_in(0.0, self.l)
        if not cols:
            raise ValueError("mesh has no facet column strictly inside (0, l)")
        xs = np.array([self.column_x(i) for i in cols])
        return cols[int(np.argmin(np.abs(xs - p)))]


class AffineMap(NamedTuple):
    F: np.ndarray
    d: np.ndarray

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(np.eye(2), np.zeros(2))

    def __call__(self, x):
        return np.asarray(x) @ np.asarray(self.F).T + self.d


def _as_map(m) -> AffineMap:
    F, d = m
    return AffineMap(np.asarray(F, dtype=float).reshape(2, 2), np.asarray(d, dtype=float).reshape(2))


class JumpRecord(NamedTuple):
    facet: int
    jump: np.ndarray
    normal: np.ndarray
    length: float


@dataclass(frozen=True, eq=False)
class CellField:
    """Cell-wise affine field with per-facet crack flags."""

    mesh: GridMesh
    F: np.ndarray
    d: np.ndarray
    open: np.ndarray

    def __post_init__(self):
        n = self.mesh.n_cells
        F = np.asarray(self.F, dtype=float)
        d = np.asarray(self.d, dtype=float)
        op = np.asarray(self.open, dtype=bool)
        if F.shape != (n, 2, 2) or d.shape != (n, 2) or op.shape != (self.mesh.n_facets,):
            raise ValueError("field arrays do not match the mesh")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(d))):
            raise ValueError("field has non-finite entries")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "open", op)

    def evaluate(self, cells, points) -> np.ndarray:
        cells = np.asarray(cells)
        return np.einsum("...ij,...j->...i", self.F[cells], points) + self.d[cells]

    def at_centers(self) -> np.ndarray:
        return self.evaluate(np.arange(self.mesh.n_cells), self.mesh.centers)

    def traces(self):
        m = self.mesh
        minus = self.evaluate(m.facet_cells[:, 0], m.facet_mid)
        plus = self.evaluate(m.facet_cells[:, 1], m.facet_mid)
        return minus, plus

    def jumps(self) -> np.ndarray:
        minus, plus = self.traces()
        return plus - minus

    def endpoint_gaps(self) -> np.ndarray:
        """Max over the two facet endpoints of |plus map - minus map|; zero iff the maps agree on the whole facet."""
        m = self.mesh
        gaps = []
        for e in range(2):
            pts = m.facet_ends[:, e]
            gaps.append(np.linalg.norm(self.evaluate(m.facet_cells[:, 1], pts)
                                       - self.evaluate(m.facet_cells[:, 0], pts), axis=-1))
        return np.maximum(*gaps)

    def jump_records(self, open_only: bool = True) -> list:
        m = self.mesh
        jumps = self.jumps()
        ids = np.flatnonzero(self.open) if open_only else np.arange(m.n_facets)
        normals = np.eye(2)[m.facet_axis]
        return [JumpRecord(int(f), jumps[f], normals[f], float(m.facet_length[f])) for f in ids]

    def scale(self) -> float:
        return float(np.abs(self.at_centers()).max(initial=0.0))

    @property
    def tau_cont(self) -> float:
        return 1e-9 * (1.0 + self.scale())

    def continuity_residual(self) -> float:
        closed = ~self.open
        if not closed.any():
            return 0.0
        return float(np.linalg.norm(self.jumps()[closed], axis=-1).max())

    def with_open(self, open_mask):
        return dataclasses.replace(self, open=np.asarray(open_mask, dtype=bool))

    def gradient_norms(self) -> np.ndarray:
        return frob(self.F)


@dataclass(frozen=True, eq=False)
class DisplacementField(CellField):
    """Field of the limit model; no magnitude bound."""


@dataclass(frozen=True, eq=False)
class DiscreteDeformation(CellField):
    """Field subject to the box constraint: |F_c| <= M and |y| <= M on every cell."""

    M: float = DEFAULT_M

    def __post_init__(self):
        super().__post_init__()
        grad = float(self.gradient_norms().max())
        if grad > self.M:
            raise BoxConstraintError(f"|grad y| = {grad:.6g} exceeds M = {self.M}")
        val = float(np.linalg.norm(self.evaluate(np.arange(self.mesh.n_cells)[:, None],
                                                 self.mesh.corners), axis=-1).max())
        if val > self.M:
            raise BoxConstraintError(f"|y| = {val:.6g} exceeds M = {self.M}")


def jump_set_measure(y: CellField, facets: Optional[np.ndarray] = None) -> float:
    """Total length of open facets (optionally restricted to a facet mask)."""
    mask = y.open if facets is None else (y.open & facets)
    return float(y.mesh.facet_length[mask].sum())


def piecewise_field(mesh: GridMesh, labels, maps, open_mask=None, cls=DiscreteDeformation, **kw):
    """Field equal to ``maps[labels[c]]`` on cell c.

    Without ``open_mask`` every facet between different labels is flagged open.
    """
    labels = np.asarray(labels)
    maps = [_as_map(m) for m in maps]
    F = np.stack([maps[k].F for k in labels])
    d = np.stack([maps[k].d for k in labels])
    if open_mask is None:
        fc = mesh.facet_cells
        open_mask = labels[fc[:, 0]] != labels[fc[:, 1]]
    return cls(mesh, F, d, np.asarray(open_mask, dtype=bool), **kw)


def build_affine(mesh: GridMesh, F, d=(0.0, 0.0), M: float = DEFAULT_M) -> DiscreteDeformation:
    """Globally affine deformation x -> F x + d without cracks."""
    return piecewise_field(mesh, np.zeros(mesh.n_cells, dtype=int), [(F, d)],
                           np.zeros(mesh.n_facets, dtype=bool), M=M)


def build_cracked(mesh: GridMesh, p: float, left, right, M: float = DEFAULT_M,
                  cls=DiscreteDeformation, **kw):
    """Two affine pieces separated by the open vertical facet column nearest to x = p."""
    col = mesh.nearest_column(p)
    labels = (mesh.centers[:, 0] > mesh.column_x(col)).astype(int)
    open_mask = np.zeros(mesh.n_facets, dtype=bool)
    open_mask[mesh.column_facets(col)] = True
    if cls is DiscreteDeformation:
        kw.setdefault("M", M)
    return piecewise_field(mesh, labels, [left, right], open_mask, cls=cls, **kw)


def as_displacement(y: CellField) -> DisplacementField:
    return DisplacementField(y.mesh, y.F, y.d, y.open)


@dataclass(frozen=True)
class Slice:
    """Scalar slice t -> u(s + t xi) . xi along one row (xi = e1) or column (xi = e2)."""

    axis: int
    index: int
    t: np.ndarray          # cell-center coordinates along the slice
    values: np.ndarray     # u . xi at those centers
    slopes: np.ndarray     # xi^T F xi per cell
    jump_t: np.ndarray     # positions of open facets crossing the slice
    jump_height: np.ndarray  # [u] . xi there
    width: float           # transverse cell size

    @property
    def n_jumps(self) -> int:
        return len(self.jump_t)


def slice_restriction(u: CellField, axis: int, index: int) -> Slice:
    m = u.mesh
    if axis == VERTICAL:  # xi = e1, slice along row `index`
        if not 0 <= index < m.ny:
            raise ValueError("row index out of range")
        cells = index * m.nx + np.arange(m.nx)
        width = m.hy
    elif axis == HORIZONTAL:
        if not 0 <= index < m.nx:
            raise ValueError("column index out of range")
        cells = np.arange(m.ny) * m.nx + index
        width = m.hx
    else:
        raise ValueError("axis must be 0 (e1) or 1 (e2)")
    pts = m.centers[cells]
    vals = u.evaluate(cells, pts)[:, axis]
    slopes = u.F[cells, axis, axis]
    fac = np.flatnonzero(u.open & (m.facet_axis == axis) & (m.facet_slot == index))
    jumps = u.jumps()[fac, axis]
    return Slice(axis, index, pts[:, axis], vals, slopes, m.facet_mid[fac, axis], jumps, width)


def slices(u: CellField, axis: int) -> list:
    n = u.mesh.ny if axis == VERTICAL else u.mesh.nx
    return [slice_restriction(u, axis, s) for s in range(n)]


def write_slices_csv(path, u: CellField, axis: int):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "slice", "kind", "t", "value", "slope"])
        for sl in slices(u, axis):
            for t, v, s in zip(sl.t, sl.values, sl.slopes):
                w.writerow([axis, sl.index, "cell", repr(float(t)), repr(float(v)), repr(float(s))])
            for t, h in zip(sl.jump_t, sl.jump_height):
                w.writerow([axis, sl.index, "jump", repr(float(t)), repr(float(h)), ""])


def field_to_dict(u: CellField) -> dict:
    out = {
        "kind": type(u).__name__,
        "mesh": u.mesh.header(),
        "F": u.F.reshape(-1, 4).tolist(),
        "d": u.d.tolist(),
        "open_facets": np.flatnonzero(u.open).tolist(),
    }
    if isinstance(u, DiscreteDeformation):
        out["M"] = u.M
    return out


def field_from_dict(data: dict) -> CellField:
    mesh = GridMesh(**data["mesh"])
    op = np.zeros(mesh.n_facets, dtype=bool)
    op[np.asarray(data.get("open_facets", []), dtype=int)] = True
    F = np.asarray(data["F"], dtype=float).reshape(-1, 2, 2)
    d = np.asarray(data["d"], dtype=float)
    if data.get("kind") == "DiscreteDeformation":
        return DiscreteDeformation(mesh, F, d, op, M=data.get("M", DEFAULT_M))
    return DisplacementField(mesh, F, d, op)
