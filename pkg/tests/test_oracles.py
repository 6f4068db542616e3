import numpy as np
import pytest

from barrierflow.errors import ConfigError, UnknownProblem
from barrierflow.oracles import (REGISTRY, NoiseSource, l1_oracle, nnpca_matrix, problem_from_dict,
                                 random_affine_problem, registry_get)


class TestNoise:
    def test_deterministic(self):
        a, b = NoiseSource(0.5, seed=7), NoiseSource(0.5, seed=7)
        for _ in range(5):
            np.testing.assert_array_equal(a.sample(3), b.sample(3))

    def test_bounded_and_centered(self):
        ns = NoiseSource(0.3, seed=1)
        xs = np.array([ns.sample(4) for _ in range(20000)])
        assert np.max(np.linalg.norm(xs, axis=1)) <= 0.3
        # standard error of each coordinate mean is below 0.3 / sqrt(4 * 20000)
        assert np.max(np.abs(xs.mean(axis=0))) < 5e-3

    def test_zero_bound(self):
        np.testing.assert_array_equal(NoiseSource(0.0).sample(3), np.zeros(3))

    def test_negative_bound(self):
        with pytest.raises(ValueError):
            NoiseSource(-1.0)


class TestOracles:
    def test_l1_selection_at_kink(self):
        o = l1_oracle([0.5, 0.0])
        np.testing.assert_array_equal(o.subgrad(np.array([0.5, 0.5])), [0.0, 1.0])
        assert not o.smooth(np.array([0.5, 0.5]))
        assert o.value(np.array([1.0, 0.0])) == pytest.approx(0.5)

    def test_nnpca_matrix(self):
        M = nnpca_matrix()
        assert M.shape == (5, 5)
        np.testing.assert_array_equal(M, M.T)


class TestRegistry:
    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_start_is_interior(self, name):
        p = registry_get(name)
        assert p.region.membership(p.x0)
        r = p.manifold.residual(p.x0)
        assert r.size == 0 or np.max(np.abs(r)) <= 1e-12

    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_known_points_feasible(self, name):
        p = registry_get(name)
        for kp in p.known_points:
            assert p.region.in_closure(kp.x)
            r = p.manifold.residual(kp.x)
            assert r.size == 0 or np.max(np.abs(r)) <= 1e-12

    def test_unknown(self):
        with pytest.raises(UnknownProblem):
            registry_get("nope")

    def test_lin_simplex_dimension(self):
        assert registry_get("lin-simplex", n=4).n == 4


class TestProblemFromDict:
    def test_linear(self):
        p = problem_from_dict({"objective": "linear:1,0,0", "A": [[1, 1, 1]], "b": [3]})
        np.testing.assert_allclose(p.x0, [1.0, 1.0, 1.0])

    @pytest.mark.parametrize("spec", [
        {"objective": "cubic:1,2", "A": [[1, 1]], "b": [1]},
        {"objective": "linear:1,2,3", "A": [[1, 1]], "b": [1]},
        {"objective": "linear:1,2", "A": [[1, 1]], "b": [1], "x0": [2, 2]},
        {"A": [[1, 1]], "b": [1]},
    ])
    def test_bad(self, spec):
        with pytest.raises(ConfigError):
            problem_from_dict(spec)


def test_random_affine_bounded():
    p = random_affine_problem(n=6, m=2, seed=3)
    assert np.all(p.manifold.A[0] > 0)
    assert np.max(np.abs(p.manifold.residual(p.x0))) < 1e-12
