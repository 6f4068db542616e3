"""Objective oracles, bounded martingale-difference noise and the problem registry."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .errors import ConfigError, UnknownProblem
from .geometry import AffineManifold, OpenRegion, sphere


@dataclass
class SubgradientOracle:
    """Objective value plus a deterministic subgradient selection.

    At kinks the selection is the midpoint of the Clarke interval
    (e.g. 0 for ``|t|`` at ``t = 0``).  ``smooth(x)`` reports whether ``f``
    is differentiable at ``x``; ``lipschitz_bound`` bounds the selection on
    the problem's test box.  Oracles whose Clarke subdifferential is a box
    expose it through ``clarke_box(x) -> (lo, hi)``.
    """

    value: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float
    smooth: Callable[[np.ndarray], bool] = lambda x: True
    description: str = ""
    clarke_box: Callable | None = None


class NoiseSource:
    """Bounded, zero-mean noise: uniform direction, radius uniform on ``[0, bound]``.

    Stateful and single-owner; two sources built with the same seed produce
    the same stream.
    """

    def __init__(self, bound: float = 0.0, seed: int | None = 0):
        if bound < 0:
            raise ValueError("noise bound must be nonnegative")
        self.bound = float(bound)
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def sample(self, n: int) -> np.ndarray:
        if self.bound == 0.0:
            return np.zeros(n)
        g = self.rng.standard_normal(n)
        nrm = np.linalg.norm(g)
        r = self.rng.uniform(0.0, self.bound)
        return g * (r / nrm) if nrm > 0 else np.zeros(n)


def sample_noise(ns: NoiseSource, n: int) -> np.ndarray:
    return ns.sample(n)


@dataclass
class KnownPoint:
    x: np.ndarray
    classification: str
    provenance: str


@dataclass
class Problem:
    name: str
    oracle: SubgradientOracle
    manifold: object
    region: OpenRegion
    kernel: str
    x0: np.ndarray
    known_points: list[KnownPoint] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x0.size

    def content(self) -> dict:
        """JSON-serializable description used for manifest hashing."""
        out = {"name": self.name, "kernel": self.kernel, "x0": self.x0.tolist()}
        M = self.manifold
        if M.is_affine:
            out["A"] = M.A.tolist()
            out["b"] = M.b.tolist()
        else:
            out["manifold"] = M.name
        out["region"] = self.region.kind
        out.update({k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.data.items()})
        return out


# -- oracle builders -------------------------------------------------------------

def linear_oracle(c) -> SubgradientOracle:
    c = np.asarray(c, dtype=float)
    return SubgradientOracle(value=lambda x: float(c @ x), subgrad=lambda x: c.copy(),
                             lipschitz_bound=float(np.linalg.norm(c)), description="linear")


def l1_oracle(a) -> SubgradientOracle:
    a = np.asarray(a, dtype=float)
    return SubgradientOracle(
        value=lambda x: float(np.sum(np.abs(x - a))),
        subgrad=lambda x: np.sign(x - a),  # sign(0) = 0, the midpoint of [-1, 1]
        lipschitz_bound=float(np.sqrt(a.size)),
        smooth=lambda x: bool(np.all(x != a)),
        description="l1",
        clarke_box=lambda x: _sign_box(x - a),
    )


def _sign_box(t):
    t = np.asarray(t, dtype=float)
    s = np.sign(t)
    kink = t == 0
    return np.where(kink, -1.0, s), np.where(kink, 1.0, s)


def zero_oracle(n: int) -> SubgradientOracle:
    return SubgradientOracle(value=lambda x: 0.0, subgrad=lambda x: np.zeros(n),
                             lipschitz_bound=0.0, description="zero")


def quadratic_oracle(M) -> SubgradientOracle:
    """``f(x) = -x^T M x``; the Lipschitz bound is valid on the unit sphere."""
    M = np.asarray(M, dtype=float)
    return SubgradientOracle(value=lambda x: float(-x @ M @ x), subgrad=lambda x: -2.0 * (M @ x),
                             lipschitz_bound=2.0 * float(np.linalg.norm(M, 2)),
                             description="neg-quadratic")


def nnpca_matrix() -> np.ndarray:
    with resources.files("barrierflow").joinpath("data/nnpca_M.json").open() as fh:
        return np.array(json.load(fh)["M"], dtype=float)


# -- registry -----------------------------------------------------------------------

def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def lin_simplex(n: int = 2) -> Problem:
    """min -x_1 over the unit simplex; every vertex e_j (j > 1) is spurious."""
    known = [KnownPoint(_unit(n, 0), "boundary-stationary", "hand KKT: mu=1, lambda_J=1")]
    known += [KnownPoint(_unit(n, j), "spurious", "hand KKT: lambda_1=-1 infeasible")
              for j in range(1, n)]
    return Problem("lin-simplex", linear_oracle(-_unit(n, 0)), AffineManifold.simplex(n),
                   OpenRegion.orthant(), "entropy", np.full(n, 1.0 / n), known,
                   data={"objective": "linear", "c": -_unit(n, 0)})


def nn_pca() -> Problem:
    M = nnpca_matrix()
    n = M.shape[0]
    return Problem("nn-pca", quadratic_oracle(M), sphere(), OpenRegion.orthant(), "entropy",
                   np.full(n, 1.0 / np.sqrt(n)), [], data={"objective": "neg-quadratic", "M": M})


def l1_simplex(n: int = 2, a=None) -> Problem:
    a = 0.5 * _unit(n, 0) if a is None else np.asarray(a, dtype=float)
    known = []
    if n == 2 and np.allclose(a, [0.5, 0.0]):
        known = [
            KnownPoint(np.array([1.0, 0.0]), "boundary-stationary",
                       "hand KKT: Clarke element d=(1,1) lies in the row space"),
            KnownPoint(np.array([0.0, 1.0]), "spurious", "hand KKT: lambda_1=-2"),
            KnownPoint(np.array([0.75, 0.25]), "interior-stationary", "d=(1,1) in row space"),
        ]
    return Problem("l1-simplex", l1_oracle(a), AffineManifold.simplex(n), OpenRegion.orthant(),
                   "entropy", np.full(n, 1.0 / n), known, data={"objective": "l1", "a": a})


def flat_simplex(n: int = 2) -> Problem:
    known = [KnownPoint(np.full(n, 1.0 / n), "interior-stationary", "f constant")]
    return Problem("flat-simplex", zero_oracle(n), AffineManifold.simplex(n),
                   OpenRegion.orthant(), "entropy", np.full(n, 1.0 / n), known,
                   data={"objective": "zero"})


def ball_abs() -> Problem:
    """min |x_1| + x_2 / 2 over the closed unit disc."""
    oracle = SubgradientOracle(
        value=lambda x: float(abs(x[0]) + 0.5 * x[1]),
        subgrad=lambda x: np.array([np.sign(x[0]), 0.5]),
        lipschitz_bound=float(np.hypot(1.0, 0.5)),
        smooth=lambda x: bool(x[0] != 0.0),
        description="abs-plus-linear",
        clarke_box=lambda x: (np.array([-1.0 if x[0] == 0 else np.sign(x[0]), 0.5]),
                              np.array([1.0 if x[0] == 0 else np.sign(x[0]), 0.5])),
    )
    known = [
        KnownPoint(np.array([0.0, -1.0]), "boundary-stationary", "hand KKT: lambda=1/4"),
        KnownPoint(np.array([0.0, 1.0]), "spurious", "hand KKT: lambda=-1/4"),
        KnownPoint(np.array([1.0, 0.0]), "spurious", "boundary point; residual 1/2 in x_2"),
    ]
    return Problem("ball-abs", oracle, AffineManifold.free(2), OpenRegion.ball(), "ball",
                   np.array([0.0, 0.5]), known, data={"objective": "ball-abs"})


REGISTRY: dict[str, Callable[..., Problem]] = {
    "lin-simplex": lin_simplex,
    "nn-pca": nn_pca,
    "l1-simplex": l1_simplex,
    "flat-simplex": flat_simplex,
    "ball-abs": ball_abs,
}


def registry_get(name: str, **kwargs) -> Problem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; registered: {sorted(REGISTRY)}") from None
    return factory(**kwargs)


def _parse_vector(spec) -> np.ndarray:
    if isinstance(spec, str):
        return np.array([float(t) for t in spec.split(",") if t.strip()])
    return np.asarray(spec, dtype=float)


def problem_from_dict(spec: dict) -> Problem:
    """Build a linearly constrained problem from a JSON-style dict.

    Keys: ``objective`` (``"linear:c1,c2,..."`` or ``"l1:a1,a2,..."``),
    ``A`` (row-major), ``b``, optional ``kernel`` (default entropy), ``x0``
    and ``name``.
    """
    try:
        kind, _, vec = str(spec["objective"]).partition(":")
        A = np.atleast_2d(np.asarray(spec["A"], dtype=float))
        b = np.asarray(spec["b"], dtype=float)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad problem spec: {exc}") from None
    vec = _parse_vector(vec)
    if kind == "linear":
        oracle = linear_oracle(vec)
    elif kind == "l1":
        oracle = l1_oracle(vec)
    else:
        raise ConfigError(f"unknown objective kind {kind!r}")
    n = A.shape[1]
    if vec.size != n:
        raise ConfigError("objective vector has the wrong length")
    M = AffineManifold(A, b, name=spec.get("name", "custom"))
    if "x0" in spec:
        x0 = _parse_vector(spec["x0"])
    else:
        # least-norm feasible point, nudged to the interior if possible
        x0 = M.project(np.ones(n))
        if np.min(x0) <= 0:
            raise ConfigError("no default interior start; supply x0")
    if np.max(np.abs(M.residual(x0))) > 1e-8 or np.min(x0) <= 0:
        raise ConfigError("x0 must satisfy A x0 = b with x0 > 0")
    return Problem(spec.get("name", "custom"), oracle, M, OpenRegion.orthant(),
                   spec.get("kernel", "entropy"), x0, [],
                   data={"objective": kind, "vector": vec})


def random_affine_problem(n: int = 6, m: int = 2, seed: int = 0, kernel: str = "neglog") -> Problem:
    """Random bounded polytope ``{A x = b, x > 0}`` with a linear objective.

    The first row of ``A`` is strictly positive, so the feasible set is bounded.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    A[0] = rng.uniform(0.5, 1.5, n)
    x0 = rng.uniform(0.5, 2.0, n)
    c = rng.standard_normal(n)
    M = AffineManifold(A, A @ x0, name="random-affine")
    return Problem("random-affine", linear_oracle(c), M, OpenRegion.orthant(), kernel, x0, [],
                   data={"objective": "linear", "c": c, "seed": seed})
