"""Feasible geometry: manifolds, open regions, metric projections, retractions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainViolation, RankDeficient, RetractionFailed
from .kernels import BarrierKernel, as_point, smat, svec_order

ON_MANIFOLD_TOL = 1e-8
RETRACT_TOL = 1e-12
MAX_HALVINGS = 60
TAU_ACT = 1e-7


# -- manifolds -----------------------------------------------------------------

class AffineManifold:
    """``{x : A x = b}``; ``A`` may have zero rows (the whole space)."""

    is_affine = True

    def __init__(self, A, b, name: str = "affine"):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("A and b have incompatible shapes")
        if A.shape[0]:
            sv = np.linalg.svd(A, compute_uv=False)
            if sv[-1] <= 1e-10 * sv[0] or A.shape[0] > A.shape[1]:
                raise RankDeficient("A must have full row rank")
        self.A = A
        self.b = b
        self.name = name

    @classmethod
    def free(cls, n: int) -> "AffineManifold":
        return cls(np.zeros((0, n)), np.zeros(0), name="free")

    @classmethod
    def simplex(cls, n: int, total: float = 1.0) -> "AffineManifold":
        return cls(np.ones((1, n)), [total], name="simplex")

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def residual(self, x) -> np.ndarray:
        return self.A @ x - self.b

    def jacobian(self, x) -> np.ndarray:
        return self.A

    def shifted(self, u) -> "AffineManifold":
        """Manifold ``{A x - b + u = 0}``."""
        return AffineManifold(self.A, self.b - np.asarray(u, dtype=float), name=self.name)

    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the affine set."""
        if not self.m:
            return np.array(x, dtype=float)
        r = self.residual(x)
        return x - self.A.T @ np.linalg.solve(self.A @ self.A.T, r)


class NonlinearManifold:
    """``{x : c(x) = 0}`` with Jacobian ``A_x = grad c(x)^T`` (an m x n matrix)."""

    is_affine = False

    def __init__(self, c: Callable, jacobian: Callable, m: int, name: str = "nonlinear",
                 shift=None):
        self._c = c
        self._jac = jacobian
        self.m = m
        self.name = name
        self.shift = np.zeros(m) if shift is None else np.asarray(shift, dtype=float)

    def residual(self, x) -> np.ndarray:
        return np.atleast_1d(self._c(x)) + self.shift

    def jacobian(self, x) -> np.ndarray:
        J = np.atleast_2d(np.asarray(self._jac(x), dtype=float))
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
            raise RankDeficient(f"{self.name}: Jacobian rank deficient")
        return J

    def shifted(self, u) -> "NonlinearManifold":
        return NonlinearManifold(self._c, self._jac, self.m, self.name, self.shift + u)


def sphere(radius: float = 1.0) -> NonlinearManifold:
    r2 = float(radius) ** 2
    return NonlinearManifold(lambda x: np.array([x @ x - r2]), lambda x: 2.0 * x[None, :],
                             m=1, name="sphere")


MANIFOLDS = {"sphere": sphere}


# -- open regions ----------------------------------------------------------------

@dataclass
class OpenRegion:
    """Open convex region ``C = {g(x) < 0}``.

    ``gauge`` is positive exactly on ``C``; ``g``/``g_jac`` give the inequality
    description used for active sets and KKT multipliers.
    """

    kind: str
    gauge: Callable
    g: Callable | None = None
    g_jac: Callable | None = None
    tau_act: float = TAU_ACT

    def membership(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x))) and self.gauge(x) > 0.0

    def in_closure(self, x, tol: float = 1e-12) -> bool:
        return self.gauge(np.asarray(x, dtype=float)) >= -tol

    def active_set(self, x) -> np.ndarray:
        if self.g is None:
            return np.zeros(0, dtype=int)
        x = np.asarray(x, dtype=float)
        return np.flatnonzero(self.g(x) >= -self.tau_act)

    @classmethod
    def orthant(cls, tau_act: float = TAU_ACT) -> "OpenRegion":
        return cls("orthant", gauge=lambda x: float(np.min(x)), g=lambda x: -np.asarray(x),
                   g_jac=lambda x: -np.eye(np.size(x)), tau_act=tau_act)

    @classmethod
    def ball(cls, tau_act: float = TAU_ACT) -> "OpenRegion":
        return cls("ball", gauge=lambda x: 1.0 - float(np.linalg.norm(x)),
                   g=lambda x: np.array([x @ x - 1.0]), g_jac=lambda x: 2.0 * x[None, :],
                   tau_act=tau_act)

    @classmethod
    def psd(cls, tau_act: float = TAU_ACT) -> "OpenRegion":
        return cls("psd", gauge=lambda x: float(np.linalg.eigvalsh(smat(x))[0]), tau_act=tau_act)

    @classmethod
    def whole(cls) -> "OpenRegion":
        return cls("whole", gauge=lambda x: np.inf)


@dataclass
class DualData:
    """Multiplier ``y``, dual slack ``s = d - A^T y`` and direction ``v = -H^{-1} s``."""

    y: np.ndarray
    s: np.ndarray
    v: np.ndarray


# -- metric projections ----------------------------------------------------------

def _hinv_matrix(kernel: BarrierKernel, x) -> np.ndarray:
    return kernel.hess_inv(x)


def _check_on_manifold(M, x, tol=ON_MANIFOLD_TOL):
    r = M.residual(x)
    if r.size and np.max(np.abs(r)) > tol:
        raise DomainViolation(f"point is off the manifold (|c(x)|={np.max(np.abs(r)):.2e})")


def _gram_solve(A, HinvAt, rhs):
    S = A @ HinvAt
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise RankDeficient("A H^-1 A^T is not positive definite") from None
    d = np.diag(L)
    if d.min() <= 1e-12 * d.max():
        raise RankDeficient("A H^-1 A^T is numerically singular")
    return np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def metric_solve(Hinv: np.ndarray, A: np.ndarray, d: np.ndarray, exact: bool = True):
    """Core of the projection formulas for a given inverse metric matrix.

    Returns ``(y, s, w)`` with ``y = (A Hinv A^T)^{-1} A Hinv d``,
    ``s = d - A^T y`` and ``w = Hinv s = P Hinv d``.  With ``exact=False`` the
    Gram system is solved in the least-squares sense, which is what the
    boundary extension of the metric needs.
    """
    Hd = Hinv @ d
    if A.shape[0] == 0:
        return np.zeros(0), d.copy(), Hd
    HAt = Hinv @ A.T
    if exact:
        y = _gram_solve(A, HAt, A @ Hd)
    else:
        y = np.linalg.lstsq(A @ HAt, A @ Hd, rcond=None)[0]
    s = d - A.T @ y
    return y, s, Hinv @ s


def project_tangent(kernel: BarrierKernel, M, x, u) -> np.ndarray:
    """H(x)-orthogonal projection of ``u`` onto the tangent space ``{A_x z = 0}``."""
    x = as_point(x)
    u = np.asarray(u, dtype=float)
    if not kernel.contains(x):
        raise DomainViolation("project_tangent needs an interior point")
    _check_on_manifold(M, x)
    A = M.jacobian(x)
    if A.shape[0] == 0:
        return u.copy()
    HAt = _hinv_matrix(kernel, x) @ A.T
    return u - HAt @ _gram_solve(A, HAt, A @ u)


def search_direction(kernel: BarrierKernel, M, x, d) -> DualData:
    """Solve ``min_{A_x v = 0} <d, v> + |v|_x^2 / 2`` in closed form."""
    x = as_point(x)
    d = np.asarray(d, dtype=float)
    if not kernel.contains(x):
        raise DomainViolation("search_direction needs an interior point")
    _check_on_manifold(M, x)
    y, s, w = metric_solve(_hinv_matrix(kernel, x), M.jacobian(x), d)
    return DualData(y=y, s=s, v=-w)


def riemannian_direction(kernel: BarrierKernel, M, x, d) -> np.ndarray:
    """``P_x H(x)^{-1} d`` (the negative of the search direction)."""
    return -search_direction(kernel, M, x, d).v


# -- retraction --------------------------------------------------------------------

def _restore(M, z, tol=RETRACT_TOL, maxiter=50):
    for _ in range(maxiter):
        r = M.residual(z)
        if np.max(np.abs(r)) <= tol:
            return z
        J = M.jacobian(z)
        z = z - J.T @ np.linalg.solve(J @ J.T, r)
    r = M.residual(z)
    return z if np.max(np.abs(r)) <= 1e-10 else None


def retract_info(M, x, step, C: OpenRegion | None = None):
    """Retract ``x + step`` onto ``M`` (inside ``C``); returns ``(point, halvings)``.

    Affine manifolds use the identity retraction; nonlinear ones use a
    Gauss-Newton feasibility restoration.  If the result leaves ``C`` the
    tangent step is halved and retried.
    """
    x = as_point(x)
    step = np.asarray(step, dtype=float)
    t = 1.0
    for halvings in range(MAX_HALVINGS + 1):
        z = x + t * step
        if not M.is_affine:
            z = _restore(M, z)
        if z is not None and (C is None or C.membership(z)):
            return z, halvings
        t *= 0.5
    raise RetractionFailed(f"no feasible point after {MAX_HALVINGS} halvings")


def retract(M, x, step, C: OpenRegion | None = None) -> np.ndarray:
    return retract_info(M, x, step, C)[0]


def first_order_retraction_check(M, kernel: BarrierKernel, C: OpenRegion, x, d, etas):
    """Ratios ``|R_x(-eta w) - (x - eta w)| / eta`` with ``w = P_x H^{-1} d``.

    First-order retractions drive these ratios to zero as ``eta`` shrinks.
    """
    x = as_point(x)
    w = riemannian_direction(kernel, M, x, d)
    out = []
    for eta in etas:
        eta = float(eta)
        raw = x - eta * w
        out.append((eta, float(np.linalg.norm(retract(M, x, -eta * w, C) - raw)) / eta))
    return out


class ProjectedField:
    """Evaluator of ``x, d -> (y, s, P_x H(x)^{-1} d)`` for a fixed kernel and manifold.

    Affine manifolds with diagonal kernels take a vectorized path that avoids
    forming dense matrices; everything else goes through :func:`metric_solve`.
    Points are not validated, so callers must keep them interior.
    """

    def __init__(self, kernel: BarrierKernel, M):
        self.kernel = kernel
        self.M = M
        self.fast = bool(M.is_affine and kernel.diagonal)
        if self.fast:
            self.A = M.A
            self.m = M.A.shape[0]

    def __call__(self, x, d):
        if not self.fast:
            return metric_solve(self.kernel.hess_inv(x), self.M.jacobian(x), d)
        D = self.kernel.hess_inv_diag(x)
        if self.m == 0:
            return np.zeros(0), d, D * d
        A = self.A
        DAt = D[:, None] * A.T
        if self.m == 1:
            a = A[0]
            den = float(a @ DAt[:, 0])
            if not den > 0.0:
                raise RankDeficient("A H^-1 A^T is singular")
            y = np.array([float(a @ (D * d)) / den])
        else:
            y = _gram_solve(A, DAt, A @ (D * d))
        s = d - A.T @ y
        return y, s, D * s
