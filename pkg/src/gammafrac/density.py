"""Stored energy densities, the quadratic form Q = D^2 W(Id) and the cleavage constants.

Matrices are numpy arrays of shape ``(..., 2, 2)``. Symmetric matrices are
mapped to 3-vectors with the isometric coordinates ``(E11, E22, sqrt(2) E12)``
so that a quadratic form on symmetric matrices is a symmetric 3x3 array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEFAULT_M = 10.0
SQRT2 = np.sqrt(2.0)

# generator of infinitesimal rotations
J = np.array([[0.0, -1.0], [1.0, 0.0]])


class InvalidDensity(ValueError):
    """The density violates an assumption needed downstream (frame indifference, definiteness)."""


class BoxConstraintError(ValueError):
    """A gradient or value exceeds the box constant M."""


def rotation(theta):
    """Rotation matrices R(theta), vectorized over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def polar_angle(F):
    """Angle of the rotation closest to F in the Frobenius norm.

    For F = [[a, b], [c, d]] the closest rotation has angle atan2(c - b, a + d);
    this holds for every F, including det F <= 0. If a + d = c - b = 0 all
    rotations are equidistant and 0 is returned.
    """
    F = np.asarray(F, dtype=float)
    return np.arctan2(F[..., 1, 0] - F[..., 0, 1], F[..., 0, 0] + F[..., 1, 1])


def dist_so2(F):
    """Frobenius distance from F to SO(2), via the closed-form 2x2 polar factor."""
    F = np.asarray(F, dtype=float)
    diff = F - rotation(polar_angle(F))
    return np.sqrt(np.sum(diff * diff, axis=(-2, -1)))


def frob(F):
    F = np.asarray(F, dtype=float)
    return np.sqrt(np.sum(F * F, axis=(-2, -1)))


def sym(G):
    G = np.asarray(G, dtype=float)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def sym_coords(E):
    """(E11, E22, sqrt2*E12) of the symmetric part of E."""
    E = sym(E)
    return np.stack([E[..., 0, 0], E[..., 1, 1], SQRT2 * E[..., 0, 1]], -1)


def from_sym_coords(z):
    z = np.asarray(z, dtype=float)
    off = z[..., 2] / SQRT2
    return np.stack([np.stack([z[..., 0], off], -1), np.stack([off, z[..., 1]], -1)], -2)


# G (row-major 4-vector) -> symmetric coordinates
_L = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 1.0 / SQRT2, 1.0 / SQRT2, 0.0],
])


@dataclass(frozen=True)
class QuadraticForm:
    """Q acting on symmetric matrices through isometric coordinates."""

    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.shape != (3, 3):
            raise ValueError("quadratic form needs a 3x3 coefficient array")
        object.__setattr__(self, "coef", 0.5 * (coef + coef.T))

    def __call__(self, E):
        """Q(E); only the symmetric part of E enters."""
        z = sym_coords(E)
        return np.einsum("...i,ij,...j->...", z, self.coef, z)

    def on_gradients(self) -> np.ndarray:
        """4x4 matrix H with G.H.G = Q(e(G)) for row-major flattened G."""
        return _L.T @ self.coef @ _L

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.coef)

    def is_positive_definite(self, rtol: float = 1e-12) -> bool:
        ev = self.eigenvalues
        return bool(ev[0] > rtol * max(1.0, abs(ev[-1])))


@dataclass(frozen=True)
class EnergyDensity:
    """A frame-indifferent stored energy density W.

    ``w`` and ``grad`` are vectorized over leading axes. ``q_closed`` is the
    registered closed form of Q in symmetric coordinates, if known. ``c_lower``
    is the constant in W >= c dist^2(., SO(2)) when known.
    """

    name: str
    w: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    q_closed: Optional[np.ndarray] = None
    c_lower: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __call__(self, F):
        return self.w(np.asarray(F, dtype=float))

    def gradient(self, F, h: float = 1e-7):
        F = np.asarray(F, dtype=float)
        if self.grad is not None:
            return self.grad(F)
        out = np.zeros_like(F)
        for i in range(2):
            for j in range(2):
                dF = np.zeros((2, 2))
                dF[i, j] = h
                out[..., i, j] = (self.w(F + dF) - self.w(F - dF)) / (2 * h)
        return out


def _w_dist2(F):
    return dist_so2(F) ** 2


def _grad_dist2(F):
    return 2.0 * (F - rotation(polar_angle(F)))


def _cof(F):
    return np.stack([
        np.stack([F[..., 1, 1], -F[..., 1, 0]], -1),
        np.stack([-F[..., 0, 1], F[..., 0, 0]], -1),
    ], -2)


def _det(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def make_svk(mu: float = 1.0, lam: float = 1.0) -> EnergyDensity:
    """St. Venant-Kirchhoff-type density (mu/4)|F^T F - I|^2 + (lam/2)(det F - 1)^2.

    The determinant term replaces the usual trace term so that W vanishes only on
    SO(2) and not on reflections.
    """
    def w(F):
        C = np.swapaxes(F, -1, -2) @ F - np.eye(2)
        return 0.25 * mu * np.sum(C * C, axis=(-2, -1)) + 0.5 * lam * (_det(F) - 1.0) ** 2

    def grad(F):
        C = np.swapaxes(F, -1, -2) @ F - np.eye(2)
        return mu * F @ C + lam * (_det(F) - 1.0)[..., None, None] * _cof(F)

    q = 2.0 * mu * np.eye(3)
    q[:2, :2] += lam
    return EnergyDensity("svk", w, grad, q, None, {"mu": mu, "lam": lam})


DIST2 = EnergyDensity("dist2", _w_dist2, _grad_dist2, 2.0 * np.eye(3), 1.0)
SVK = make_svk()

DENSITIES = {"dist2": DIST2, "svk": SVK}


def get_density(name: str) -> EnergyDensity:
    try:
        return DENSITIES[name]
    except KeyError:
        raise KeyError(f"unknown density {name!r}; known: {sorted(DENSITIES)}") from None


def check_box(F, M: float = DEFAULT_M):
    norms = frob(F)
    worst = float(np.max(norms)) if np.size(norms) else 0.0
    if worst > M:
        raise BoxConstraintError(f"|F| = {worst:.6g} exceeds the box constant M = {M}")


def eval_w(W: EnergyDensity, F, M: float = DEFAULT_M):
    """W(F), rejecting gradients outside the box |F| <= M."""
    F = np.asarray(F, dtype=float)
    check_box(F, M)
    return W(F)


def _fd_hessian(phi, n: int, h: float) -> np.ndarray:
    """Central-difference Hessian of phi at 0, Richardson-extrapolated from h and 2h."""
    def stencil(step):
        H = np.zeros((n, n))
        f0 = phi(np.zeros(n))
        eye = np.eye(n)
        for i in range(n):
            H[i, i] = (phi(step * eye[i]) - 2 * f0 + phi(-step * eye[i])) / step**2
            for j in range(i + 1, n):
                pp = phi(step * (eye[i] + eye[j]))
                pm = phi(step * (eye[i] - eye[j]))
                mp = phi(step * (-eye[i] + eye[j]))
                mm = phi(-step * (eye[i] + eye[j]))
                H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * step**2)
        return H

    return (4.0 * stencil(h) - stencil(2.0 * h)) / 3.0


def hessian_q_fd(W: EnergyDensity, h: float = 1e-4, tol: float = 1e-5) -> QuadraticForm:
    """Finite-difference Q = D^2 W(Id) with a frame-indifference consistency check.

    The Hessian is also taken over all four gradient entries; for an admissible
    density it must equal L^T Q L, i.e. ignore the skew part of G. A mismatch
    beyond ``tol`` (relative) raises InvalidDensity.
    """
    eye = np.eye(2)
    q = _fd_hessian(lambda z: float(W(eye + from_sym_coords(z))), 3, h)
    h4 = _fd_hessian(lambda g: float(W(eye + g.reshape(2, 2))), 4, h)
    scale = max(1.0, np.abs(h4).max())
    if np.abs(h4 - _L.T @ q @ _L).max() > tol * scale:
        raise InvalidDensity(f"density {W.name!r}: Hessian at Id depends on the skew part of G")
    return QuadraticForm(q)


def hessian_q(W: EnergyDensity, h: float = 1e-4, prefer_closed: bool = True) -> QuadraticForm:
    if prefer_closed and W.q_closed is not None:
        return QuadraticForm(W.q_closed)
    return hessian_q_fd(W, h)


@dataclass(frozen=True)
class UniaxialSolution:
    alpha: float
    z: np.ndarray  # symmetric coordinates of F^1
    multiplier: float
    kkt_residual: float

    @property
    def F1(self) -> np.ndarray:
        return from_sym_coords(self.z)


def uniaxial_kkt(Q: QuadraticForm) -> UniaxialSolution:
    """Minimize Q(F) over symmetric F with F11 = 1 via the 4x4 KKT system."""
    if not Q.is_positive_definite():
        raise InvalidDensity(f"Q is not positive definite (eigenvalues {Q.eigenvalues})")
    c = np.array([1.0, 0.0, 0.0])
    K = np.zeros((4, 4))
    K[:3, :3] = 2.0 * Q.coef
    K[:3, 3] = c
    K[3, :3] = c
    rhs = np.array([0.0, 0.0, 0.0, 1.0])
    sol = np.linalg.solve(K, rhs)
    # one step of iterative refinement
    sol += np.linalg.solve(K, rhs - K @ sol)
    residual = float(np.abs(K @ sol - rhs).max())
    z = sol[:3]
    return UniaxialSolution(float(z @ Q.coef @ z), z, float(sol[3]), residual)


def alpha_and_fa(Q: QuadraticForm, a: float):
    """alpha = inf{Q(F): F11 = 1} and the minimizer F^a with F^a_11 = a, Q(F^a) = alpha a^2."""
    sol = uniaxial_kkt(Q)
    return sol.alpha, a * sol.F1


def taylor_remainder_bound(W: EnergyDensity, G, t_grid, Q: Optional[QuadraticForm] = None) -> float:
    """max over t of |W(Id + tG) - Q(e(tG))/2| / t^3."""
    G = np.asarray(G, dtype=float)
    if Q is None:
        Q = hessian_q(W)
    worst = 0.0
    for t in t_grid:
        r = abs(float(W(np.eye(2) + t * G)) - 0.5 * float(Q(t * G))) / t**3
        worst = max(worst, r)
    return worst
