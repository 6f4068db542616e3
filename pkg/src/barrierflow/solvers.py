"""Discrete schemes: the Riemannian Hessian-barrier step and the Bregman (mirror) step.

Both are first-order discretizations of the projected metric flow.  The
Hessian-barrier step moves along ``-P_x H(x)^{-1}(d + xi)`` and retracts; the
mirror step solves the Bregman-proximal subproblem on an affine manifold.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from .diagnostics import TAU_K, TAU_S, StationarityReport, classify, kkt_residual
from .errors import (ConfigError, DomainViolation, DualNewtonFailed, NotSelfConcordant,
                     RangeViolation, StepRejected, UnsupportedRegion)
from .geometry import ON_MANIFOLD_TOL, ProjectedField, retract_info, search_direction
from .kernels import BarrierKernel, EntropyKernel, as_point, make_kernel
from .oracles import NoiseSource, Problem

log = logging.getLogger(__name__)

DUAL_NEWTON_TOL = 1e-11
DUAL_NEWTON_MAXITER = 100


@dataclass(frozen=True)
class StepSchedule:
    """Constant step ``eta0`` or polynomial decay ``eta0 / (k + 1)^alpha``.

    ``cap`` optionally bounds every step from above.
    """

    kind: str = "constant"
    eta0: float = 0.05
    alpha: float = 1.0
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not self.eta0 > 0:
            raise ConfigError("eta0 must be positive")
        if self.kind == "polynomial" and not 0.5 < self.alpha <= 1.0:
            raise ConfigError("polynomial schedule needs alpha in (0.5, 1]")
        if self.cap is not None and not self.cap > 0:
            raise ConfigError("cap must be positive")

    @classmethod
    def constant(cls, eta: float, cap: float | None = None) -> "StepSchedule":
        return cls("constant", eta, 1.0, cap)

    @classmethod
    def polynomial(cls, eta0: float, alpha: float, cap: float | None = None) -> "StepSchedule":
        return cls("polynomial", eta0, alpha, cap)

    def __call__(self, k: int) -> float:
        eta = self.eta0 if self.kind == "constant" else self.eta0 / (k + 1) ** self.alpha
        return min(eta, self.cap) if self.cap is not None else eta

    @property
    def diverging_sum(self) -> bool:
        """Whether the steps sum to infinity (true for every valid schedule)."""
        return self.kind == "constant" or self.alpha <= 1.0

    @property
    def vanishing(self) -> bool:
        """Whether ``eta_k = o(1 / log k)``; decided from the parameters."""
        return self.kind == "polynomial" and self.alpha > 0


@dataclass
class SolverConfig:
    schedule: StepSchedule = field(default_factory=StepSchedule)
    max_iters: int = 1000
    noise: float = 0.0
    scheme: str = "rhb"
    stop_tol: float = 1e-10
    seed: int = 0
    record_every: int = 1
    tau_s: float = TAU_S
    tau_k: float = TAU_K

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not self.stop_tol > 0:
            raise ConfigError("stop_tol must be positive")
        if self.scheme not in ("rhb", "mirror"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.noise < 0:
            raise ConfigError("noise bound must be nonnegative")
        if self.record_every < 1:
            raise ConfigError("record_every must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceRecord:
    k: int
    x: np.ndarray
    f: float
    eta: float
    stable_res: float
    kkt_res: float
    gauge: float


@dataclass
class Trace:
    records: list[TraceRecord]
    report: StationarityReport | None
    config: SolverConfig
    stop_reason: str = ""
    iterations: int = 0
    halvings: int = 0
    wall_time: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def f(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    @property
    def final(self) -> np.ndarray:
        return self.records[-1].x


@dataclass
class StepInfo:
    x: np.ndarray
    delta: np.ndarray
    halvings: int
    direction: np.ndarray


# -- single steps ----------------------------------------------------------------------

def rhb_step(kernel: BarrierKernel, M, C, x, d, xi, eta: float, cap: float | None = None,
             return_info: bool = False):
    """One Hessian-barrier step ``x+ = R_x(-eta P_x H(x)^{-1}(d + xi))``.

    The realized update is ``x - eta (v + xi~) + eta Delta`` where
    ``v + xi~ = P_x H^{-1}(d + xi)``; ``Delta`` (retraction and halving
    correction) is reported when ``return_info`` is set.
    """
    kernel = make_kernel(kernel)
    x = as_point(x)
    g = np.asarray(d, dtype=float) + (0.0 if xi is None else np.asarray(xi, dtype=float))
    w = -search_direction(kernel, M, x, g).v
    raw = x - eta * w
    if M.is_affine and C.membership(raw):
        xn, halvings = raw, 0
    else:
        if M.is_affine and kernel.lhscb and cap is not None and eta > cap:
            raise StepRejected(f"step {eta:.3e} exceeds the safe bound {cap:.3e} and leaves C")
        xn, halvings = retract_info(M, x, -eta * w, C)
        if halvings:
            log.debug("rhb step halved %d times", halvings)
    if not return_info:
        return xn
    delta = (xn - raw) / eta if eta > 0 else np.zeros_like(x)
    return StepInfo(xn, delta, halvings, w)


def safe_step_threshold(kernel: BarrierKernel, M_d: float, M_xi: float, M_hat: float) -> float:
    """``1 / (M_hat (M_d + M_xi)^2)`` for self-concordant (LHSCB) kernels."""
    kernel = make_kernel(kernel)
    if not kernel.lhscb:
        raise NotSelfConcordant(f"{kernel.id} is not a self-concordant barrier")
    if M_d < 0 or M_xi < 0 or not M_d + M_xi > 0 or not M_hat > 0:
        raise ValueError("bounds must be positive")
    return 1.0 / (M_hat * (M_d + M_xi) ** 2)


def hess_inv_norm(kernel: BarrierKernel, x) -> float:
    """Spectral norm of ``H(x)^{-1}``."""
    if kernel.diagonal:
        return float(np.max(kernel.hess_inv_diag(kernel._check(x))))
    return float(np.linalg.eigvalsh(kernel.hess_inv(x))[-1])


def _entropy_simplex_row(kernel, A):
    return (isinstance(kernel, EntropyKernel) and A.shape[0] == 1
            and np.all(A[0] == A[0, 0]) and A[0, 0] != 0)


def _feasible_dual_start(kernel, z0, At, eta):
    """A ``y`` with ``z0 + eta At y`` inside the mirror range (orthant-range kernels)."""
    if kernel.in_mirror_range(z0):
        return np.zeros(At.shape[1])
    if kernel.kind not in ("neglog", "power"):
        raise DomainViolation(f"{kernel.id}: proximal subproblem has no dual start at y = 0")
    n, m = At.shape
    # maximize t subject to z0 + eta At y + t <= 0, t <= 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([eta * At, np.ones((n, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=-z0, bounds=[(None, None)] * m + [(None, 1.0)],
                  method="highs")
    if res.status != 0 or res.x[-1] <= 0:
        raise DomainViolation("proximal subproblem is infeasible for this step")
    return res.x[:m]


def mirror_step(kernel: BarrierKernel, M, x, d, xi, eta: float, method: str = "auto",
                return_dual: bool = False):
    """Bregman-proximal step ``argmin <d + xi, z> + D(z, x) / eta`` over ``A z = b``.

    The optimality system ``grad phi(x+) = grad phi(x) - eta (g - A^T y)``,
    ``A x+ = b`` is solved by damped Newton on the dual ``y``.  With
    ``method="auto"`` the entropy kernel uses its closed forms (free space and
    simplex-type constraints); ``method="newton"`` forces the dual solve.
    """
    kernel = make_kernel(kernel)
    if not M.is_affine:
        raise UnsupportedRegion("mirror step is implemented for affine manifolds only")
    x = as_point(x)
    if not kernel.contains(x):
        raise DomainViolation("mirror step needs an interior point")
    A, b = M.A, M.b
    r0 = M.residual(x)
    if r0.size and np.max(np.abs(r0)) > ON_MANIFOLD_TOL:
        raise DomainViolation("mirror step needs a point on the manifold")
    g = np.asarray(d, dtype=float) + (0.0 if xi is None else np.asarray(xi, dtype=float))
    m = A.shape[0]

    if method == "auto" and isinstance(kernel, EntropyKernel):
        if m == 0:
            xn = x * np.exp(-eta * g)
            return (xn, np.zeros(0)) if return_dual else xn
        if _entropy_simplex_row(kernel, A):
            t = np.log(x) - eta * g
            w = np.exp(t - t.max())
            xn = (b[0] / A[0, 0]) * w / w.sum()
            # y from the first coordinate of the optimality system
            y = np.array([float(np.mean(np.log(xn) - t)) / (eta * A[0, 0])]) if eta > 0 else np.zeros(1)
            return (xn, y) if return_dual else xn
    elif method not in ("auto", "newton"):
        raise ValueError(f"unknown method {method!r}")

    z0 = kernel.grad(x) - eta * g
    if m == 0:
        xn = kernel.mirror_inverse(z0, method="newton" if method == "newton" else "closed")
        return (xn, np.zeros(0)) if return_dual else xn
    At = A.T
    y = _feasible_dual_start(kernel, z0, At, eta)

    def primal(yv):
        return kernel.mirror_inverse(z0 + eta * (At @ yv))

    xn = primal(y)
    F = A @ xn - b
    res = float(np.max(np.abs(F)))
    for _ in range(DUAL_NEWTON_MAXITER):
        if res <= DUAL_NEWTON_TOL:
            return (xn, y) if return_dual else xn
        J = eta * (A @ kernel.hess_inv(xn) @ At)
        step = np.linalg.solve(J, F)
        t = 1.0
        nrm = float(np.linalg.norm(F))
        for _ in range(60):
            yn = y - t * step
            try:
                xt = primal(yn)
            except RangeViolation:
                t *= 0.5
                continue
            Ft = A @ xt - b
            if np.linalg.norm(Ft) <= (1.0 - 1e-4 * t) * nrm:
                break
            t *= 0.5
        else:
            raise DualNewtonFailed("dual Newton line search failed", res)
        y, xn, F = yn, xt, Ft
        res = float(np.max(np.abs(F)))
    if res <= DUAL_NEWTON_TOL:
        return (xn, y) if return_dual else xn
    raise DualNewtonFailed("dual Newton did not converge", res)


# -- driver ------------------------------------------------------------------------

def _check_start(problem: Problem, kernel: BarrierKernel, x):
    if not (problem.region.membership(x) and kernel.contains(x)):
        raise DomainViolation("initial point must be strictly interior")
    r = problem.manifold.residual(x)
    if r.size and np.max(np.abs(r)) > ON_MANIFOLD_TOL:
        raise DomainViolation("initial point must lie on the manifold")


def run(problem: Problem, config: SolverConfig, kernel=None, x0=None,
        noise: NoiseSource | None = None) -> Trace:
    """Iterate the configured scheme from ``x0`` (default: the problem's start).

    Stops when the stable residual ``|P_x H^{-1} d|`` drops below
    ``config.stop_tol`` or after ``max_iters`` steps, then classifies the
    terminal point.
    """
    t_start = time.perf_counter()
    kernel = make_kernel(kernel if kernel is not None else problem.kernel)
    x = as_point(problem.x0 if x0 is None else x0)
    _check_start(problem, kernel, x)
    M, C, oracle = problem.manifold, problem.region, problem.oracle
    if config.scheme == "mirror" and not M.is_affine:
        raise UnsupportedRegion("mirror scheme needs an affine manifold")
    ns = noise if noise is not None else NoiseSource(config.noise, config.seed)
    field_ = ProjectedField(kernel, M)
    sched = config.schedule
    records: list[TraceRecord] = []
    halvings = 0
    stop_reason = "max_iters"
    n = x.size

    def record(k, x, d, eta, stable):
        kkt = kkt_residual(problem, x, d)[0]
        records.append(TraceRecord(k, x.copy(), float(oracle.value(x)), eta, stable, kkt,
                                   float(C.gauge(x))))

    k = 0
    while True:
        d = oracle.subgrad(x)
        stable = float(np.linalg.norm(field_(x, d)[2]))
        eta = sched(k)
        done = stable <= config.stop_tol or k >= config.max_iters
        if k % config.record_every == 0 or done:
            record(k, x, d, eta, stable)
        if done:
            if stable <= config.stop_tol:
                stop_reason = "stop_tol"
            break
        xi = ns.sample(n)
        if config.scheme == "rhb":
            info = rhb_step(kernel, M, C, x, d, xi, eta, cap=sched.cap, return_info=True)
            x, halvings = info.x, halvings + info.halvings
        else:
            x = mirror_step(kernel, M, x, d, xi, eta)
        k += 1
    report = classify(problem, kernel, x, config.tau_s, config.tau_k)
    return Trace(records, report, config, stop_reason, k, halvings,
                 time.perf_counter() - t_start)


def estimate_M_hat(problem: Problem, kernel=None, eta: float = 1e-3, iters: int = 500) -> float:
    """Pilot-run estimate of ``sup_k |H(x_k)^{-1}|_2`` along a noise-free trajectory."""
    kernel = make_kernel(kernel if kernel is not None else problem.kernel)
    cfg = SolverConfig(StepSchedule.constant(eta), max_iters=iters, stop_tol=1e-300)
    tr = run(problem, cfg, kernel)
    return max(hess_inv_norm(kernel, r.x) for r in tr.records)
