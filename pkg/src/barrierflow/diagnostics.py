"""Stationarity diagnostics: stable-set vs KKT residuals, spurious-point detection,
complementarity checks and the kernel-adapted random perturbation.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, lsq_linear, nnls, root

from .errors import DomainViolation, UnsupportedRegion
from .geometry import metric_solve
from .kernels import BOUNDARY_GAUGE, BarrierKernel, as_point, make_kernel, smat
from .oracles import Problem, SubgradientOracle

log = logging.getLogger(__name__)

TAU_S = 1e-7
TAU_K = 1e-5
OFF_MANIFOLD_TOL = 1e-6

CLASSES = ("interior-stationary", "boundary-stationary", "spurious", "nonstationary")


@dataclass
class StationarityReport:
    x: np.ndarray
    d: np.ndarray
    stable_residual: float
    kkt_residual: float
    s: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    comp_gap: float | None
    classification: str
    tau_s: float
    tau_k: float
    region: str = ""
    d_kkt: np.ndarray = None
    A: np.ndarray = field(default=None, repr=False)
    affine: bool = True

    def to_dict(self) -> dict:
        out = {}
        for k in ("x", "d", "d_kkt", "s", "y", "mu", "lam", "active"):
            out[k] = np.asarray(getattr(self, k)).tolist()
        for k in ("stable_residual", "kkt_residual", "comp_gap", "classification",
                  "tau_s", "tau_k", "region"):
            out[k] = getattr(self, k)
        return out


# -- residuals ---------------------------------------------------------------

def stable_residual(kernel: BarrierKernel, M, x, d) -> float:
    """``|P_x H(x)^{-1} d|`` at an interior point."""
    _, _, w = metric_solve(kernel.hess_inv(x), M.jacobian(x), np.asarray(d, dtype=float),
                           exact=False)
    return float(np.linalg.norm(w))


def multiplier_stable_residual(kernel: BarrierKernel, M, x, d) -> float:
    """``min_y |H(x)^{-1}(d - A_x^T y)|`` by ordinary least squares."""
    Hinv = kernel.hess_inv(x) if kernel.contains(x) else kernel.hess_inv_extended(x)
    A = M.jacobian(x)
    d = np.asarray(d, dtype=float)
    if A.shape[0] == 0:
        return float(np.linalg.norm(Hinv @ d))
    B = Hinv @ A.T
    y = np.linalg.lstsq(B, Hinv @ d, rcond=None)[0]
    return float(np.linalg.norm(Hinv @ d - B @ y))


def _brute_force_nnls(B, r, free: int):
    """min |B z - r| with z[free:] >= 0, by enumerating supports."""
    best = (np.inf, None)
    k = B.shape[1] - free
    for size in range(k + 1):
        for S in itertools.combinations(range(k), size):
            cols = list(range(free)) + [free + j for j in S]
            z = np.zeros(B.shape[1])
            if cols:
                z[cols] = np.linalg.lstsq(B[:, cols], r, rcond=None)[0]
            if np.any(z[free:] < -1e-14):
                continue
            z[free:] = np.maximum(z[free:], 0.0)
            res = float(np.linalg.norm(B @ z - r))
            if res < best[0]:
                best = (res, z)
    return best


def _kkt_fixed_d(A, G, d):
    """min over mu free, lam >= 0 of |d + A^T mu + G^T lam| for a fixed ``d``."""
    n = d.size
    m = A.shape[0]
    # eliminate the free multipliers: project onto the complement of range(A^T)
    if m:
        Q = np.eye(n) - A.T @ np.linalg.lstsq(A @ A.T, A, rcond=None)[0]
    else:
        Q = np.eye(n)
    k = G.shape[0]
    if k:
        lam, res = nnls(Q @ G.T, -Q @ d)
        if k <= 3:
            bf_res, z = _brute_force_nnls(Q @ G.T, -Q @ d, 0)
            if abs(bf_res - res) > 1e-10 * max(1.0, res):
                log.warning("nnls and support enumeration disagree: %.3e vs %.3e", res, bf_res)
            if bf_res < res:
                lam = z
    else:
        lam = np.zeros(0)
    rhs = d + G.T @ lam
    mu = -np.linalg.lstsq(A.T, rhs, rcond=None)[0] if m else np.zeros(0)
    return float(np.linalg.norm(rhs + A.T @ mu)), mu, lam


def _kkt_clarke(A, G, lo, hi):
    """Same residual with ``d`` also free in the box ``[lo, hi]``; returns the best ``d``."""
    n = lo.size
    m, k = A.shape[0], G.shape[0]
    free = lo < hi
    E = np.eye(n)[:, free]
    B = np.hstack([E, A.T, G.T])
    rhs = -np.where(free, 0.0, lo)
    lb = np.concatenate([lo[free], np.full(m, -np.inf), np.zeros(k)])
    ub = np.concatenate([hi[free], np.full(m, np.inf), np.full(k, np.inf)])
    z = lsq_linear(B, rhs, bounds=(lb, ub), method="bvls", tol=1e-14).x
    d = lo.copy()
    d[free] = z[:int(free.sum())]
    return d


def kkt_residual(problem: Problem, x, d, active=None, clarke: bool = True):
    """``min |d + A_x^T mu + G_J^T lam|`` over free ``mu`` and ``lam >= 0``.

    ``G_J`` stacks the gradients of the active inequalities.  When the oracle
    describes its Clarke subdifferential as a box and ``clarke`` is set, ``d``
    is also optimized over that box (the given selection is kept if it does
    at least as well).  Returns ``(residual, mu, lam, active, d_used)``.
    """
    x = as_point(x)
    d = np.asarray(d, dtype=float)
    A = problem.manifold.jacobian(x)
    C = problem.region
    J = C.active_set(x) if active is None else np.asarray(active, dtype=int)
    G = C.g_jac(x)[J] if J.size else np.zeros((0, x.size))
    res, mu, lam = _kkt_fixed_d(A, G, d)
    box = problem.oracle.clarke_box if clarke else None
    if box is not None and res > 0:
        lo, hi = box(x)
        if np.any(lo < hi):
            d2 = _kkt_clarke(A, G, lo, hi)
            d2 = np.clip(d2, lo, hi)
            res2, mu2, lam2 = _kkt_fixed_d(A, G, d2)
            if res2 < res:
                return res2, mu2, lam2, J, d2
    return res, mu, lam, J, d


def classify(problem: Problem, kernel, x, tau_s: float = TAU_S, tau_k: float = TAU_K,
             d=None) -> StationarityReport:
    """Stable-set and KKT residuals at ``x`` and the resulting label.

    Labels: ``interior-stationary`` / ``boundary-stationary`` when the KKT
    residual is within ``tau_k`` (boundary if some inequality is active),
    ``spurious`` when only the stable residual vanishes, ``nonstationary``
    otherwise.  Boundary points use the kernel's continuous extension of the
    inverse metric.
    """
    kernel = make_kernel(kernel)
    x = as_point(x)
    M, C = problem.manifold, problem.region
    r = M.residual(x)
    if r.size and np.max(np.abs(r)) > OFF_MANIFOLD_TOL:
        raise DomainViolation(f"point is off the manifold (|c(x)|={np.max(np.abs(r)):.2e})")
    if not C.in_closure(x, 1e-12):
        raise DomainViolation("point is outside the closed region")
    d = problem.oracle.subgrad(x) if d is None else np.asarray(d, dtype=float)
    interior = kernel.contains(x) and kernel.gauge(x) >= BOUNDARY_GAUGE
    Hinv = kernel.hess_inv(x) if interior else kernel.hess_inv_extended(x)
    A = M.jacobian(x)
    y, s, w = metric_solve(Hinv, A, d, exact=False)
    stable = float(np.linalg.norm(w))
    kkt, mu, lam, J, d_kkt = kkt_residual(problem, x, d)
    comp = float(np.min(s + x)) if C.kind == "orthant" else None
    if kkt <= tau_k:
        label = "boundary-stationary" if J.size else "interior-stationary"
    elif stable <= tau_s:
        label = "spurious"
    else:
        label = "nonstationary"
    return StationarityReport(x=x, d=d, stable_residual=stable, kkt_residual=kkt, s=s, y=y,
                              mu=mu, lam=lam, active=J, comp_gap=comp, classification=label,
                              tau_s=tau_s, tau_k=tau_k, region=C.kind, d_kkt=d_kkt, A=A,
                              affine=M.is_affine)


def complementarity_check(report: StationarityReport, tol: float = 1e-9) -> str:
    """Classify the sign of ``s + x`` at a stable point of an orthant problem.

    Returns ``"holds"`` if the report's slack satisfies ``min(s + x) >= -tol``,
    ``"strictly_violated"`` if every multiplier compatible with ``x o s = 0``
    leaves ``min(s + x) < -tol`` (decided by a linear program), and
    ``"indeterminate"`` otherwise.  For nonlinear manifolds the answer is
    informational only.
    """
    if report.region != "orthant":
        raise UnsupportedRegion(f"complementarity check needs an orthant region, got {report.region!r}")
    x, d, A = report.x, report.d, report.A
    if np.min(report.s + x) >= -tol:
        return "holds"
    n, m = x.size, A.shape[0]
    inactive = np.ones(n, dtype=bool)
    inactive[report.active] = False
    # variables (y, t); maximize t subject to t <= d_i - (A^T y)_i + x_i, s_I = 0
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A.T, np.ones((n, 1))])
    b_ub = d + x
    A_eq = np.hstack([A.T[inactive], np.zeros((int(inactive.sum()), 1))])
    b_eq = d[inactive]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq if A_eq.size else None,
                  b_eq=b_eq if A_eq.size else None, bounds=[(None, None)] * (m + 1),
                  method="highs")
    if res.status == 0 and -res.fun < -tol:
        return "strictly_violated"
    if res.status == 2:  # no multiplier satisfies x o s = 0: fall back to the report's slack
        return "strictly_violated" if np.min(report.s + x) < -tol else "indeterminate"
    return "indeterminate"


# -- perturbation ------------------------------------------------------------------

def _uniform_ball(rng, dim, radius):
    if dim == 0:
        return np.zeros(0)
    g = rng.standard_normal(dim)
    return g / np.linalg.norm(g) * radius * rng.uniform() ** (1.0 / dim)


@dataclass
class PerturbedProblem:
    """Problem with objective ``f + <grad phi, v>`` and manifold ``c + u = 0``."""

    base: Problem
    kernel: BarrierKernel
    u: np.ndarray
    v: np.ndarray

    @property
    def is_trivial(self) -> bool:
        return not (np.any(self.u) or np.any(self.v))

    @property
    def manifold(self):
        return self.base.manifold.shifted(self.u) if np.any(self.u) else self.base.manifold

    @property
    def oracle(self) -> SubgradientOracle:
        base = self.base.oracle
        if not np.any(self.v):
            return base
        k, v = self.kernel, self.v
        return SubgradientOracle(
            value=lambda x: base.value(x) + float(k.grad(x) @ v),
            subgrad=lambda x: base.subgrad(x) + k.hess_apply(x, v),
            lipschitz_bound=np.inf,
            smooth=base.smooth,
            description=base.description + "+perturbation",
        )

    def as_problem(self) -> Problem:
        if self.is_trivial:
            return self.base
        M = self.manifold
        x0 = self.base.x0
        if M.is_affine:
            x0 = M.project(x0)
        else:
            from .geometry import _restore

            x0 = _restore(M, x0)
        return Problem(self.base.name + "~perturbed", self.oracle, M, self.base.region,
                       self.kernel.id, x0, [], data=dict(self.base.data, u=self.u, v=self.v))


def perturb(problem: Problem, kernel, eps: float, seed: int = 0) -> PerturbedProblem:
    """Draw ``u`` in ``eps B^m`` and ``v`` in ``eps B^n`` uniformly.

    On orthant regions ``v`` is reflected into the negative orthant so that
    the induced slack ``s = -H(x) v`` is nonnegative.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    kernel = make_kernel(kernel)
    n = problem.n
    m = problem.manifold.m
    rng = np.random.default_rng(seed)
    u = _uniform_ball(rng, m, eps)
    v = _uniform_ball(rng, n, eps)
    if problem.region.kind == "orthant":
        v = -np.abs(v)
    return PerturbedProblem(problem, kernel, u, v)


def perturbed_residual_system(pp: PerturbedProblem, kernel, x, y):
    """``(H^{-1}(d - A_x^T y) + v, c(x) + u)`` with ``d`` the base subgradient."""
    kernel = make_kernel(kernel)
    x = as_point(x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    M = pp.base.manifold
    d = pp.base.oracle.subgrad(x)
    A = M.jacobian(x)
    r1 = kernel.hess_inv_apply(x, d - A.T @ y) + pp.v
    r2 = M.residual(x) + pp.u
    return r1, r2


def solve_perturbed_stable_point(pp: PerturbedProblem, kernel, x_guess, y_guess=None):
    """Newton-type solve of the perturbed stable system from a starting guess."""
    kernel = make_kernel(kernel)
    n = pp.base.n
    m = pp.base.manifold.m
    if y_guess is None and m:
        # least-squares multiplier at the guess
        x_guess = np.asarray(x_guess, dtype=float)
        Hinv = kernel.hess_inv(x_guess)
        B = Hinv @ pp.base.manifold.jacobian(x_guess).T
        rhs = Hinv @ pp.base.oracle.subgrad(x_guess) + pp.v
        y0 = np.linalg.lstsq(B, rhs, rcond=None)[0]
    else:
        y0 = np.zeros(m) if y_guess is None else np.atleast_1d(y_guess)

    def F(z):
        x = z[:n]
        if not kernel.contains(x):
            return np.full(n + m, 1e6)
        r1, r2 = perturbed_residual_system(pp, kernel, x, z[n:])
        return np.concatenate([r1, r2])

    sol = root(F, np.concatenate([x_guess, y0]), method="hybr", options={"xtol": 1e-14})
    return sol.x[:n], sol.x[n:], float(np.linalg.norm(F(sol.x)))


def simplex_grid(n: int, spacing: float, total: float = 1.0) -> np.ndarray:
    """All points of ``{x >= 0, sum x = total}`` on a lattice of the given spacing."""
    N = int(round(1.0 / spacing))
    if n == 1:
        return np.array([[total]])
    pts = [c for c in itertools.combinations(range(N + n - 1), n - 1)]
    bars = np.array(pts, dtype=int)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), N + n - 1)])
    counts = np.diff(edges, axis=1) - 1
    return counts * (total / N)


def _simplex_grid_fast(n, spacing, total):
    N = int(round(1.0 / spacing))
    if n == 2:
        i = np.arange(N + 1)
        return np.column_stack([i, N - i]) * (total / N)
    if n == 3:
        i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        keep = i + j <= N
        i, j = i[keep], j[keep]
        return np.column_stack([i, j, N - i - j]) * (total / N)
    return simplex_grid(n, spacing, total)


@dataclass
class RootScan:
    points: np.ndarray
    residuals: np.ndarray
    tol: float
    roots: np.ndarray
    clusters: list | None

    @property
    def n_roots(self) -> int:
        return len(self.roots)


def scan_stable_roots(pp: PerturbedProblem, kernel, spacing: float = 1e-3, tol=None,
                      cluster_cap: int = 20000) -> RootScan:
    """Grid scan of the perturbed stable equation over a simplex-type manifold.

    Needs an affine manifold ``{a 1^T x = b}`` on the orthant and a diagonal
    kernel.  A grid point is a root when ``min_y |H^{-1}(d - A^T y) + v|`` is
    below ``tol`` (default ``spacing * max(|v|_1, |d|-scale)``); roots are
    grouped into clusters of grid-adjacent points.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    kernel = make_kernel(kernel)
    M = pp.manifold
    A = M.A
    if not (M.is_affine and A.shape[0] == 1 and np.allclose(A, A[0, 0]) and kernel.diagonal):
        raise UnsupportedRegion("grid scan supports simplex-type manifolds with diagonal kernels")
    n = A.shape[1]
    total = float(M.b[0] / A[0, 0])
    X = _simplex_grid_fast(n, spacing, total)
    X = X[np.all(X > 0, axis=1)]
    oracle = pp.base.oracle
    if oracle.description == "zero":
        D = np.zeros_like(X)
    else:
        D = np.array([oracle.subgrad(x) for x in X])
    Hd = kernel.hess_inv_diag(X)
    a = A[0]
    # residual(y) = Hd*(D - a y) + v ; least squares in scalar y
    B = Hd * a
    R0 = Hd * D + pp.v
    denom = np.einsum("ij,ij->i", B, B)
    y = np.einsum("ij,ij->i", B, R0) / denom
    res = np.linalg.norm(R0 - B * y[:, None], axis=1)
    if tol is None:
        scale = np.abs(pp.v).sum() + (np.abs(D).max() if D.size else 0.0)
        tol = spacing * scale
    roots = X[res <= tol]
    clusters = None
    if 0 < len(roots) <= cluster_cap:
        tree = cKDTree(roots)
        pairs = tree.query_pairs(r=1.01 * np.sqrt(2.0) * spacing * total, output_type="ndarray")
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                       shape=(len(roots), len(roots)))
        _, labels = connected_components(g, directed=False)
        clusters = [roots[labels == k] for k in range(labels.max() + 1)]
    elif len(roots) == 0:
        clusters = []
    return RootScan(points=X, residuals=res, tol=tol, roots=roots, clusters=clusters)


def slack_sign_check_psd(X, V) -> bool:
    """Is ``s = -H(X) V = -X^{-1} V X^{-1}`` positive definite?"""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if X.ndim == 1:
        X, V = smat(X), smat(V)
    try:
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        raise DomainViolation("X must be positive definite") from None
    Xi = np.linalg.inv(X)
    s = -Xi @ V @ Xi
    s = 0.5 * (s + s.T)
    return bool(np.linalg.eigvalsh(s)[0] > 0)


def reparameterization_check(x) -> dict:
    """Compare ``grad G^T grad G`` with the entropy inverse Hessian ``Diag(x)``.

    Two candidate maps are evaluated, ``x = y o y / 2`` and ``x = y o y / 4``;
    the returned dict holds the max-abs mismatch for each.
    """
    x = as_point(x)
    out = {}
    for name, c in (("half", 0.5), ("quarter", 0.25)):
        y = np.sqrt(x / c)
        JtJ = (2 * c * y) ** 2  # grad G = Diag(2 c y)
        out[name] = float(np.max(np.abs(JtJ - x)))
    return out
