"""Legendre barrier kernels and the Hessian-Riemannian metric they induce.

Five kernels are provided:

========== ============================== ===================
id         phi(x)                         domain
========== ============================== ===================
entropy    sum x_i (log x_i - 1)          positive orthant
neglog     -sum log x_i                   positive orthant
power:p    sum x_i^(2-p) / ((2-p)(1-p))   positive orthant
ball       -sqrt(1 - |x|^2)               open unit ball
logdet     -log det X                     positive-definite cone
========== ============================== ===================

Points are flat float arrays.  Symmetric matrices for ``logdet`` are stored
through the scaled upper-triangle embedding :func:`svec`, under which the
Euclidean inner product of two vectors equals the Frobenius inner product of
the matrices.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from .errors import ConfigError, DomainViolation, NoConvergence, RangeViolation, SingularMetric

#: Gauge below which a point is treated as numerically on the boundary.
BOUNDARY_GAUGE = 1e-14

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 100


def as_point(x) -> np.ndarray:
    """Return ``x`` as a 1-D float array, rejecting NaN/Inf entries."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DomainViolation("point has non-finite entries")
    return x


# -- symmetric-matrix embedding -------------------------------------------

def svec_dim(d: int) -> int:
    return d * (d + 1) // 2


def svec_order(n: int) -> int:
    """Matrix order ``d`` with ``d(d+1)/2 == n``."""
    d = int(round((math.sqrt(8 * n + 1) - 1) / 2))
    if svec_dim(d) != n:
        raise DomainViolation(f"length {n} is not a triangular number")
    return d


def svec(X) -> np.ndarray:
    """Scaled upper triangle of a symmetric matrix (off-diagonals times sqrt 2)."""
    X = np.asarray(X, dtype=float)
    d = X.shape[0]
    iu = np.triu_indices(d)
    scale = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return X[iu] * scale


def smat(v) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    d = svec_order(v.size)
    iu = np.triu_indices(d)
    scale = np.where(iu[0] == iu[1], 1.0, 1.0 / math.sqrt(2.0))
    X = np.zeros((d, d))
    X[iu] = v * scale
    return X + np.triu(X, 1).T


# -- kernels ---------------------------------------------------------------

class BarrierKernel:
    """Base class for Legendre kernels.

    Subclasses implement the closed-form pieces; the base class supplies the
    generic machinery (dense Hessians, a damped-Newton mirror inverse,
    Bregman distances).
    """

    kind: str = ""
    #: Whether the kernel is a logarithmically homogeneous self-concordant barrier.
    lhscb: bool = False
    #: Modulus of strong convexity, valid on ``mu_box`` (or the whole domain if None).
    strong_convexity_mu: float | None = 1.0
    mu_box: tuple[float, float] | None = (0.0, 1.0)
    #: Kernels whose Hessian is diagonal expose ``hess_diag``/``hess_inv_diag``.
    diagonal: bool = True

    @property
    def id(self) -> str:
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.id!r})"

    def __eq__(self, other):
        return isinstance(other, BarrierKernel) and other.id == self.id

    def __hash__(self):
        return hash(self.id)

    # domain ---------------------------------------------------------------
    def gauge(self, x) -> float:
        """Distance-like measure to the boundary; positive exactly on the interior."""
        raise NotImplementedError

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x))) and self.gauge(x) > 0.0

    def _check(self, x) -> np.ndarray:
        x = as_point(x)
        if not self.gauge(x) > 0.0:
            raise DomainViolation(f"{self.id}: point outside the open domain")
        return x

    def _check_metric(self, x) -> np.ndarray:
        x = self._check(x)
        if self.gauge(x) < BOUNDARY_GAUGE:
            raise SingularMetric(f"{self.id}: point numerically on the boundary")
        return x

    def theta(self, x) -> float | None:
        """LHSCB parameter for points of the dimension of ``x`` (None if not LHSCB)."""
        return None

    # values and derivatives ---------------------------------------------------
    def value(self, x) -> float:
        raise NotImplementedError

    def closure_value(self, x) -> float:
        """Value on the closed domain, using the continuous extension where finite."""
        return self.value(x)

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess_diag(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess_inv_diag(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess_apply(self, x, v) -> np.ndarray:
        x = self._check_metric(x)
        return self.hess_diag(x) * np.asarray(v, dtype=float)

    def hess_inv_apply(self, x, v) -> np.ndarray:
        x = self._check(x)
        return self.hess_inv_diag(x) * np.asarray(v, dtype=float)

    def hess(self, x) -> np.ndarray:
        """Dense Hessian."""
        if self.diagonal:
            return np.diag(self.hess_diag(self._check_metric(x)))
        x = self._check_metric(x)
        eye = np.eye(x.size)
        return np.column_stack([self.hess_apply(x, e) for e in eye])

    def hess_inv(self, x) -> np.ndarray:
        """Dense inverse Hessian."""
        if self.diagonal:
            return np.diag(self.hess_inv_diag(self._check(x)))
        x = self._check(x)
        eye = np.eye(x.size)
        return np.column_stack([self.hess_inv_apply(x, e) for e in eye])

    def hess_inv_extended(self, x) -> np.ndarray:
        """Continuous extension of the inverse Hessian to the closed domain."""
        from .errors import ExtensionUnavailable

        raise ExtensionUnavailable(f"{self.id}: no boundary extension of the inverse metric")

    # mirror map ----------------------------------------------------------------
    def in_mirror_range(self, z) -> bool:
        return True

    def mirror_inverse(self, z, method: str = "closed") -> np.ndarray:
        """Solve ``grad(x) = z`` for interior ``x``.

        ``method="newton"`` forces the generic damped Newton solve, which is
        also what kernels without a closed form use.
        """
        z = as_point(z)
        if not self.in_mirror_range(z):
            raise RangeViolation(f"{self.id}: dual point outside the range of the mirror map")
        if method == "closed":
            return self._mirror_closed(z)
        if method == "newton":
            return self._mirror_newton(z)
        raise ValueError(f"unknown method {method!r}")

    def _mirror_closed(self, z):
        return self._mirror_newton(z)

    def _newton_start(self, n: int) -> np.ndarray:
        return np.ones(n)

    def _mirror_newton(self, z, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
        x = self._newton_start(z.size)
        scale = max(1.0, float(np.max(np.abs(z))))
        r = self.grad(x) - z
        res = float(np.max(np.abs(r)))
        for _ in range(maxiter):
            if res <= tol * scale:
                return x
            step = self.hess_inv_apply(x, r)
            t = 1.0
            for _ in range(60):
                xn = x - t * step
                if self.contains(xn):
                    rn = self.grad(xn) - z
                    resn = float(np.max(np.abs(rn)))
                    if resn < res or t < 1e-8:
                        break
                t *= 0.5
            else:
                raise NoConvergence(f"{self.id}: mirror inverse line search failed", res)
            x, r, res = xn, rn, resn
        if res <= tol * scale:
            return x
        raise NoConvergence(f"{self.id}: mirror inverse did not converge", res)

    # Bregman distance -----------------------------------------------------------
    def bregman(self, x, y) -> float:
        x = as_point(x)
        y = self._check(y)
        return float(self.closure_value(x) - self.value(y) - self.grad(y) @ (x - y))


class EntropyKernel(BarrierKernel):
    kind = "entropy"

    def gauge(self, x):
        return float(np.min(x))

    def value(self, x):
        x = self._check(x)
        return float(np.sum(x * (np.log(x) - 1.0)))

    def closure_value(self, x):
        x = as_point(x)
        if np.any(x < 0):
            raise DomainViolation("entropy: negative coordinate")
        return float(np.sum(xlogy(x, x) - x))

    def grad(self, x):
        return np.log(self._check(x))

    def hess_diag(self, x):
        return 1.0 / x

    def hess_inv_diag(self, x):
        return np.array(x, dtype=float)

    def hess_inv_extended(self, x):
        x = as_point(x)
        if np.any(x < 0):
            raise DomainViolation("entropy: negative coordinate")
        return np.diag(x)

    def _mirror_closed(self, z):
        return np.exp(z)

    def bregman(self, x, y):
        x = as_point(x)
        y = self._check(y)
        if np.any(x < 0):
            raise DomainViolation("entropy: negative coordinate")
        return float(np.sum(xlogy(x, x) - xlogy(x, y) - x + y))


class NegLogKernel(BarrierKernel):
    kind = "neglog"
    lhscb = True

    @property
    def id(self):
        return "neglog"

    def gauge(self, x):
        return float(np.min(x))

    def theta(self, x):
        return float(np.size(x))

    def value(self, x):
        return float(-np.sum(np.log(self._check(x))))

    def grad(self, x):
        return -1.0 / self._check(x)

    def hess_diag(self, x):
        return 1.0 / x**2

    def hess_inv_diag(self, x):
        return np.asarray(x, dtype=float) ** 2

    def hess_inv_extended(self, x):
        x = as_point(x)
        if np.any(x < 0):
            raise DomainViolation("neglog: negative coordinate")
        return np.diag(x**2)

    def in_mirror_range(self, z):
        return bool(np.all(z < 0))

    def _mirror_closed(self, z):
        return -1.0 / z


class PowerKernel(BarrierKernel):
    """Separable kernel ``t^(2-p) / ((2-p)(1-p))`` for ``p`` in (1, 2)."""

    kind = "power"

    def __init__(self, p: float = 1.5):
        p = float(p)
        if not 1.0 < p < 2.0:
            raise ValueError("power kernel needs p in (1, 2)")
        self.p = p

    @property
    def id(self):
        return f"power:{self.p:g}"

    def gauge(self, x):
        return float(np.min(x))

    def value(self, x):
        x = self._check(x)
        p = self.p
        return float(np.sum(x ** (2 - p)) / ((2 - p) * (1 - p)))

    def closure_value(self, x):
        x = as_point(x)
        if np.any(x < 0):
            raise DomainViolation("power: negative coordinate")
        p = self.p
        return float(np.sum(x ** (2 - p)) / ((2 - p) * (1 - p)))

    def grad(self, x):
        x = self._check(x)
        return x ** (1 - self.p) / (1 - self.p)

    def hess_diag(self, x):
        return x ** (-self.p)

    def hess_inv_diag(self, x):
        return np.asarray(x, dtype=float) ** self.p

    def hess_inv_extended(self, x):
        x = as_point(x)
        if np.any(x < 0):
            raise DomainViolation("power: negative coordinate")
        return np.diag(x**self.p)

    def in_mirror_range(self, z):
        return bool(np.all(z < 0))

    def _mirror_closed(self, z):
        # grad_i = t^(1-p)/(1-p)  =>  t = ((1-p) z)^(1/(1-p))
        return ((1 - self.p) * z) ** (1.0 / (1 - self.p))


class BallKernel(BarrierKernel):
    kind = "ball"
    mu_box = None  # H >= I on the whole ball

    def gauge(self, x):
        return 1.0 - float(np.linalg.norm(x))

    def _s(self, x):
        return math.sqrt(max(1.0 - float(x @ x), 0.0))

    def value(self, x):
        return -self._s(self._check(x))

    def closure_value(self, x):
        x = as_point(x)
        if float(x @ x) > 1.0 + 1e-15:
            raise DomainViolation("ball: point outside the closed ball")
        return -self._s(x)

    def grad(self, x):
        x = self._check(x)
        return x / self._s(x)

    diagonal = False

    def hess_apply(self, x, v):
        x = self._check_metric(x)
        v = np.asarray(v, dtype=float)
        s = self._s(x)
        return (v + x * (x @ v) / s**2) / s

    def hess_inv_apply(self, x, v):
        x = self._check(x)
        v = np.asarray(v, dtype=float)
        return self._s(x) * (v - x * (x @ v))

    def hess(self, x):
        x = self._check_metric(x)
        s = self._s(x)
        return (np.eye(x.size) + np.outer(x, x) / s**2) / s

    def hess_inv(self, x):
        x = self._check(x)
        return self._s(x) * (np.eye(x.size) - np.outer(x, x))

    def hess_inv_extended(self, x):
        x = as_point(x)
        if float(x @ x) > 1.0 + 1e-12:
            raise DomainViolation("ball: point outside the closed ball")
        return self._s(x) * (np.eye(x.size) - np.outer(x, x))

    def _newton_start(self, n):
        return np.zeros(n)

    def _mirror_closed(self, z):
        return z / math.sqrt(1.0 + float(z @ z))


class LogDetKernel(BarrierKernel):
    kind = "logdet"
    lhscb = True
    diagonal = False

    def gauge(self, x):
        return float(np.linalg.eigvalsh(smat(x))[0])

    def theta(self, x):
        return float(svec_order(np.size(x)))

    def _chol(self, x):
        try:
            return np.linalg.cholesky(smat(x))
        except np.linalg.LinAlgError:
            raise DomainViolation("logdet: matrix not positive definite") from None

    def _check(self, x):
        x = as_point(x)
        svec_order(x.size)
        self._chol(x)
        return x

    def value(self, x):
        L = self._chol(as_point(x))
        return float(-2.0 * np.sum(np.log(np.diag(L))))

    def grad(self, x):
        x = self._check(x)
        return svec(-np.linalg.inv(smat(x)))

    def hess_apply(self, x, v):
        x = self._check_metric(x)
        Xi = np.linalg.inv(smat(x))
        return svec(Xi @ smat(v) @ Xi)

    def hess_inv_apply(self, x, v):
        X = smat(self._check(x))
        return svec(X @ smat(v) @ X)

    def in_mirror_range(self, z):
        return bool(np.linalg.eigvalsh(smat(z))[-1] < 0)

    def _newton_start(self, n):
        return svec(np.eye(svec_order(n)))

    def _mirror_closed(self, z):
        return svec(-np.linalg.inv(smat(z)))


_SIMPLE = {
    "entropy": EntropyKernel,
    "neglog": NegLogKernel,
    "neg_log": NegLogKernel,
    "ball": BallKernel,
    "logdet": LogDetKernel,
    "log_det": LogDetKernel,
}

KERNEL_IDS = ("entropy", "neglog", "power:1.5", "ball", "logdet")


def make_kernel(spec) -> BarrierKernel:
    """Build a kernel from its string id (``"entropy"``, ``"power:1.5"``, ...)."""
    if isinstance(spec, BarrierKernel):
        return spec
    spec = str(spec).strip().lower()
    if spec.startswith("power"):
        _, _, p = spec.partition(":")
        return PowerKernel(float(p) if p else 1.5)
    try:
        return _SIMPLE[spec]()
    except KeyError:
        raise ConfigError(f"unknown kernel {spec!r}; choose from {KERNEL_IDS}") from None


# -- functional interface ----------------------------------------------------

def kernel_value(k: BarrierKernel, x) -> float:
    return k.value(x)


def kernel_grad(k: BarrierKernel, x) -> np.ndarray:
    return k.grad(x)


def hess_apply(k: BarrierKernel, x, v) -> np.ndarray:
    return k.hess_apply(x, v)


def hess_inv_apply(k: BarrierKernel, x, v) -> np.ndarray:
    return k.hess_inv_apply(x, v)


def mirror_inverse(k: BarrierKernel, z, method: str = "closed") -> np.ndarray:
    return k.mirror_inverse(z, method=method)


def bregman_distance(k: BarrierKernel, x, y) -> float:
    return k.bregman(x, y)


def local_norm(k: BarrierKernel, x, v) -> float:
    """``sqrt(<H(x) v, v>)``."""
    v = np.asarray(v, dtype=float)
    return math.sqrt(max(float(k.hess_apply(x, v) @ v), 0.0))


class MetricWorkspace:
    """Factorization of the barrier Hessian at a fixed point.

    Single-owner scratch object: build one per point and discard it when the
    iterate moves.
    """

    def __init__(self, kernel: BarrierKernel, x):
        self.kernel = kernel
        self.x = kernel._check_metric(x)
        if kernel.diagonal:
            self.h = kernel.hess_diag(self.x)
            self.hinv = kernel.hess_inv_diag(self.x)
            self.H_factor = None
        else:
            H = kernel.hess(self.x)
            try:
                self.H_factor = np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                raise SingularMetric(f"{kernel.id}: Hessian factorization failed") from None
            self.h = None
            self.hinv = kernel.hess_inv(self.x)

    def hess_apply(self, v):
        v = np.asarray(v, dtype=float)
        if self.h is not None:
            return self.h * v
        L = self.H_factor
        return L @ (L.T @ v)

    def hess_inv_apply(self, v):
        v = np.asarray(v, dtype=float)
        if self.h is not None:
            return self.hinv * v
        return self.hinv @ v

    def hess_matrix(self):
        if self.h is not None:
            return np.diag(self.h)
        return self.H_factor @ self.H_factor.T

    def hess_inv_matrix(self):
        if self.h is not None:
            return np.diag(self.hinv)
        return self.hinv
