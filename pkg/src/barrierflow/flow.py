"""Explicit-Euler integration of the projected metric subgradient flow and escape experiments."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import classify
from .errors import ConfigError, DomainViolation, NoExit
from .geometry import ON_MANIFOLD_TOL, ProjectedField, _restore
from .kernels import as_point, make_kernel
from .oracles import Problem

log = logging.getLogger(__name__)


@dataclass
class FlowConfig:
    """Integrator settings.

    ``interior_safety`` is the factor ``rho`` in (0, 1): a step may shrink each
    distance to the boundary to no less than ``rho`` times its current value.
    ``record_dt`` thins the stored samples (None stores every step).
    """

    h: float = 1e-4
    t_max: float = 10.0
    interior_safety: float = 0.5
    record_dt: float | None = None

    def __post_init__(self):
        if not self.h > 0 or not self.t_max > 0:
            raise ConfigError("h and t_max must be positive")
        if not 0.0 < self.interior_safety < 1.0:
            raise ConfigError("interior_safety must lie in (0, 1)")


@dataclass
class FlowTrace:
    t: np.ndarray
    x: np.ndarray
    f: np.ndarray
    stable_res: np.ndarray
    events: list = field(default_factory=list)
    capped_steps: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    @property
    def final_stable_residual(self) -> float:
        return float(self.stable_res[-1])


def _max_step(problem: Problem, x, w, h, rho):
    """Largest step ``<= h`` keeping ``x - step * w`` within the safety margin."""
    C = problem.region
    if C.kind == "orthant":
        pos = w > 0
        if np.any(pos):
            lim = float(np.min((1.0 - rho) * x[pos] / w[pos]))
            return min(h, lim)
        return h
    if C.kind == "whole":
        return h
    g0 = C.gauge(x)
    step = h
    for _ in range(60):
        if C.gauge(x - step * w) >= rho * g0:
            return step
        step *= 0.5
    return step


def integrate(problem: Problem, kernel=None, x0=None, cfg: FlowConfig | None = None,
              stop=None) -> FlowTrace:
    """Euler integration of ``x' = -P_x H(x)^{-1} d(x)`` with interior-safe steps.

    ``stop(t, x)`` may end the integration early.  Nonlinear manifolds are
    re-entered by a Gauss-Newton restoration after each step.
    """
    cfg = cfg or FlowConfig()
    kernel = make_kernel(kernel if kernel is not None else problem.kernel)
    x = as_point(problem.x0 if x0 is None else x0)
    M, C, oracle = problem.manifold, problem.region, problem.oracle
    if not (C.membership(x) and kernel.contains(x)):
        raise DomainViolation("flow start must be strictly interior")
    r = M.residual(x)
    if r.size and np.max(np.abs(r)) > ON_MANIFOLD_TOL:
        raise DomainViolation("flow start must lie on the manifold")
    field_ = ProjectedField(kernel, M)
    rho = cfg.interior_safety
    affine = M.is_affine

    ts, xs, fs, rs = [], [], [], []
    t = 0.0
    next_rec = 0.0
    capped = 0
    eps_t = 1e-12 * cfg.t_max
    while True:
        d = oracle.subgrad(x)
        w = field_(x, d)[2]
        if cfg.record_dt is None or t >= next_rec - eps_t or t >= cfg.t_max - eps_t:
            ts.append(t)
            xs.append(x)
            fs.append(oracle.value(x))
            rs.append(float(np.sqrt(w @ w)))
            if cfg.record_dt is not None:
                next_rec += cfg.record_dt
        if t >= cfg.t_max - eps_t or (stop is not None and stop(t, x)):
            break
        h = min(cfg.h, cfg.t_max - t)
        step = _max_step(problem, x, w, h, rho)
        if step < h:
            capped += 1
        xn = x - step * w
        if not affine:
            z = _restore(M, xn)
            while z is None or not C.membership(z):
                step *= 0.5
                z = _restore(M, x - step * w)
            xn = z
        x = xn
        t += step
    return FlowTrace(np.array(ts), np.array(xs), np.array(fs), np.array(rs), [], capped)


# -- escape experiments --------------------------------------------------------------

@dataclass
class EscapeRecord:
    delta: float
    x0: np.ndarray
    t_exit: float
    reentries: int
    min_dist_after_exit: float


def escape_start(problem: Problem, xbar, delta: float) -> np.ndarray:
    """Start at sup-distance ``delta`` from ``xbar`` on the segment towards the default start."""
    xbar = as_point(xbar)
    c = problem.x0
    direction = c - xbar
    return xbar + delta / float(np.max(np.abs(direction))) * direction


def escape_experiment(problem: Problem, kernel, xbar, eps: float, deltas,
                      cfg: FlowConfig | None = None, post_exit: float = 5.0,
                      require_spurious: bool = True) -> list[EscapeRecord]:
    """Exit times from the sup-norm box of radius ``eps`` around a spurious point.

    For every ``delta`` the flow starts at distance ``delta`` from ``xbar``
    and runs until ``post_exit`` time units after leaving the box (or
    ``t_max``).  The exit time is interpolated linearly between samples;
    re-entries into the box and the smallest distance after exit are
    reported.  Raises :class:`NoExit` if some start never leaves the box.
    """
    cfg = cfg or FlowConfig(t_max=50.0)
    kernel = make_kernel(kernel if kernel is not None else problem.kernel)
    xbar = as_point(xbar)
    if require_spurious:
        label = classify(problem, kernel, xbar).classification
        if label != "spurious":
            raise ConfigError(f"escape experiments need a spurious point, got {label!r}")
    out = []
    for delta in deltas:
        delta = float(delta)
        x0 = escape_start(problem, xbar, delta)
        if delta >= eps:
            out.append(EscapeRecord(delta, x0, 0.0, 0, delta))
            continue
        exit_time = [None]

        def stop(t, x):
            if exit_time[0] is None and np.max(np.abs(x - xbar)) >= eps:
                exit_time[0] = t
            return exit_time[0] is not None and t >= exit_time[0] + post_exit

        tr = integrate(problem, kernel, x0, cfg, stop=stop)
        dist = np.max(np.abs(tr.x - xbar), axis=1)
        idx = np.flatnonzero(dist >= eps)
        if idx.size == 0:
            raise NoExit(f"no exit from the eps={eps} box within t_max={cfg.t_max} (delta={delta})")
        i = int(idx[0])
        t0, t1, d0, d1 = tr.t[i - 1], tr.t[i], dist[i - 1], dist[i]
        t_exit = float(t0 + (eps - d0) / (d1 - d0) * (t1 - t0)) if d1 != d0 else float(t1)
        after = dist[i:]
        inside = after < eps
        reentries = int(np.count_nonzero(inside[1:] & ~inside[:-1]))
        out.append(EscapeRecord(delta, x0, t_exit, reentries, float(after.min())))
    return out


def logistic_exit_time(eps: float, delta: float) -> float:
    """Exit time of the logistic reduction ``x' = x (1 - x)`` from ``delta`` to ``eps``."""
    return float(np.log(eps * (1 - delta) / (delta * (1 - eps))))


# -- omega-limit estimation ------------------------------------------------------------

@dataclass
class OmegaLimit:
    centroids: np.ndarray
    counts: np.ndarray
    max_stable_residual: float
    tail_samples: int


def omega_limit_estimate(trace: FlowTrace, tail_fraction: float = 0.2,
                         radius: float = 1e-3) -> OmegaLimit:
    """Greedy clustering of the trajectory tail.

    Each tail sample joins the first centroid within sup-distance ``radius``
    or opens a new cluster.
    """
    N = len(trace.t)
    start = int(np.floor((1.0 - tail_fraction) * N))
    tail = trace.x[start:]
    if len(tail) < 100:
        log.warning("omega-limit estimate from only %d tail samples", len(tail))
    cents: list[np.ndarray] = []
    sums: list[np.ndarray] = []
    counts: list[int] = []
    for p in tail:
        for j, c in enumerate(cents):
            if np.max(np.abs(p - c)) <= radius:
                sums[j] += p
                counts[j] += 1
                break
        else:
            cents.append(p.copy())
            sums.append(p.copy())
            counts.append(1)
    centroids = np.array([s / c for s, c in zip(sums, counts)])
    return OmegaLimit(centroids, np.array(counts), float(np.max(trace.stable_res[start:])),
                      len(tail))
