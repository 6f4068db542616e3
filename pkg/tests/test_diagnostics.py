import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrierflow.diagnostics import (classify, complementarity_check, kkt_residual,
                                     multiplier_stable_residual, perturb,
                                     perturbed_residual_system, reparameterization_check,
                                     scan_stable_roots, slack_sign_check_psd,
                                     solve_perturbed_stable_point, stable_residual)
from barrierflow.errors import DomainViolation, ExtensionUnavailable, UnsupportedRegion
from barrierflow.geometry import AffineManifold, OpenRegion
from barrierflow.kernels import make_kernel, svec
from barrierflow.oracles import REGISTRY, Problem, linear_oracle, registry_get


def grid_kkt_lin_simplex_e2():
    """Brute-force grid for min |(-1 + mu - lam, mu)| over mu, lam >= 0."""
    mu = np.linspace(-2, 2, 4001)[:, None]
    lam = np.linspace(0, 3, 3001)[None, :]
    return float(np.min(np.hypot(-1 + mu - lam, mu)))


class TestClassify:
    def test_lin_simplex_e2_spurious(self):
        rep = classify(registry_get("lin-simplex"), "entropy", [0.0, 1.0])
        assert rep.classification == "spurious"
        assert rep.stable_residual == 0.0
        assert rep.kkt_residual == pytest.approx(grid_kkt_lin_simplex_e2(), abs=1e-6)
        assert rep.kkt_residual == pytest.approx(1 / np.sqrt(2), rel=1e-12)
        np.testing.assert_allclose(rep.s + rep.x, [-1.0, 1.0])

    def test_lin_simplex_e1_certificate(self):
        rep = classify(registry_get("lin-simplex"), "entropy", [1.0, 0.0])
        assert rep.classification == "boundary-stationary"
        assert rep.kkt_residual <= 1e-10
        np.testing.assert_allclose(rep.mu, [1.0])
        np.testing.assert_allclose(rep.lam, [1.0])
        np.testing.assert_array_equal(rep.active, [1])

    def test_interior_stationary(self, rng):
        A = rng.standard_normal((2, 4))
        x = rng.uniform(0.5, 1.5, 4)
        p = Problem("t", linear_oracle(A.T @ [0.3, -0.7]), AffineManifold(A, A @ x),
                    OpenRegion.orthant(), "neglog", x)
        rep = classify(p, "neglog", x)
        assert rep.classification == "interior-stationary"
        assert rep.stable_residual < 1e-12

    def test_nonstationary(self):
        rep = classify(registry_get("lin-simplex"), "entropy", [0.5, 0.5])
        assert rep.classification == "nonstationary"

    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_known_points(self, name):
        p = registry_get(name)
        for kp in p.known_points:
            assert classify(p, p.kernel, kp.x).classification == kp.classification, kp.provenance

    def test_clarke_selection(self):
        # selection d = (1, 0) alone fails, the Clarke element (1, 1) certifies stationarity
        p = registry_get("l1-simplex")
        res_sel = kkt_residual(p, [1.0, 0.0], [1.0, 0.0], clarke=False)[0]
        res = kkt_residual(p, [1.0, 0.0], [1.0, 0.0])
        assert res_sel == pytest.approx(1 / np.sqrt(2))
        assert res[0] < 1e-12
        np.testing.assert_allclose(res[4], [1.0, 1.0])

    def test_off_manifold(self):
        with pytest.raises(DomainViolation):
            classify(registry_get("lin-simplex"), "entropy", [0.5, 0.6])

    def test_outside_region(self):
        with pytest.raises(DomainViolation):
            classify(registry_get("lin-simplex"), "entropy", [1.5, -0.5])

    def test_boundary_without_extension(self):
        M = AffineManifold(svec(np.eye(2))[None, :], [1.0])
        p = Problem("psd", linear_oracle(np.zeros(3)), M, OpenRegion.psd(), "logdet",
                    svec(np.eye(2) / 2))
        with pytest.raises(ExtensionUnavailable):
            classify(p, "logdet", svec(np.diag([1.0, 0.0])))


class TestComplementarity:
    def test_worked_values(self):
        p = registry_get("lin-simplex")
        assert complementarity_check(classify(p, "entropy", [0.0, 1.0])) == "strictly_violated"
        assert complementarity_check(classify(p, "entropy", [1.0, 0.0])) == "holds"
        assert complementarity_check(classify(registry_get("flat-simplex"), "entropy",
                                              [0.3, 0.7])) == "holds"

    def test_non_orthant(self):
        rep = classify(registry_get("ball-abs"), "ball", [0.0, 1.0])
        with pytest.raises(UnsupportedRegion):
            complementarity_check(rep)

    def test_l1_spurious_vertex(self):
        rep = classify(registry_get("l1-simplex"), "entropy", [0.0, 1.0])
        assert rep.classification == "spurious"
        assert complementarity_check(rep) == "strictly_violated"


class TestEquivalence:
    """Projection form and multiplier form of the stable residual vanish together."""

    COMBOS = [("entropy", "simplex"), ("neglog", "affine"), ("power:1.5", "affine"),
              ("ball", "affine"), ("entropy", "sphere"), ("neglog", "sphere")]

    @pytest.mark.parametrize("kid,manifold", COMBOS)
    def test_random_pairs(self, kid, manifold, rng):
        from barrierflow.geometry import sphere

        k = make_kernel(kid)
        for i in range(100):
            n = 4
            if kid == "ball":
                x = rng.standard_normal(n)
                x *= rng.uniform(0.1, 0.9) / np.linalg.norm(x)
            else:
                x = rng.uniform(0.2, 2.0, n)
            if manifold == "simplex":
                x /= x.sum()
                M = AffineManifold.simplex(n)
            elif manifold == "affine":
                A = rng.standard_normal((2, n))
                M = AffineManifold(A, A @ x)
            else:
                x /= np.linalg.norm(x)
                M = sphere()
            A = M.jacobian(x)
            d = A.T @ rng.standard_normal(A.shape[0]) if i % 2 else rng.standard_normal(n)
            r_proj = stable_residual(k, M, x, d)
            r_mult = multiplier_stable_residual(k, M, x, d)
            assert (r_proj <= 1e-8) == (r_mult <= 1e-7)
            assert (r_mult <= 1e-8) == (r_proj <= 1e-7)
            assert (r_proj <= 1e-8) == bool(i % 2)

    def test_null_space_entropy(self, rng):
        # the extended inverse metric Diag(x) kills the normal-cone generators -e_i, i in J
        k = make_kernel("entropy")
        C = OpenRegion.orthant()
        for _ in range(20):
            x = rng.uniform(0.1, 1.0, 5)
            x[rng.random(5) < 0.4] = 0.0
            J = C.active_set(x)
            Hinv = k.hess_inv_extended(x)
            for i in J:
                assert np.all(Hinv @ C.g_jac(x)[i] == 0.0)


class TestPerturbation:
    def test_zero_eps(self):
        p = registry_get("lin-simplex")
        pp = perturb(p, "entropy", 0.0, seed=3)
        assert pp.oracle is p.oracle
        assert pp.manifold is p.manifold
        assert pp.as_problem() is p

    def test_draw(self):
        p = registry_get("flat-simplex", n=3)
        pp = perturb(p, "entropy", 0.1, seed=4)
        assert np.all(pp.v <= 0)
        assert np.linalg.norm(pp.v) <= 0.1
        assert np.linalg.norm(pp.u) <= 0.1
        pp2 = perturb(p, "entropy", 0.1, seed=4)
        np.testing.assert_array_equal(pp.v, pp2.v)

    def test_perturbed_oracle(self, rng):
        p = registry_get("lin-simplex", n=3)
        k = make_kernel("entropy")
        pp = perturb(p, k, 0.1, seed=5)
        x = rng.uniform(0.2, 1.0, 3)
        assert pp.oracle.value(x) == pytest.approx(-x[0] + k.grad(x) @ pp.v)
        np.testing.assert_allclose(pp.oracle.subgrad(x), [-1, 0, 0] + pp.v / x)

    def test_flat_simplex_hand_solution(self):
        p = registry_get("flat-simplex", n=3)
        pp = perturb(p, "entropy", 0.05, seed=9)
        pp.u = np.zeros(1)
        x_star = pp.v / pp.v.sum()
        r1, r2 = perturbed_residual_system(pp, "entropy", x_star, [pp.v.sum()])
        np.testing.assert_allclose(r1, 0.0, atol=1e-16)
        np.testing.assert_allclose(r2, 0.0, atol=1e-15)

    def test_hand_solution_with_shift(self):
        p = registry_get("flat-simplex", n=3)
        pp = perturb(p, "entropy", 0.05, seed=10)
        x_star = (1 - pp.u[0]) * pp.v / pp.v.sum()
        r1, r2 = perturbed_residual_system(pp, "entropy", x_star, [pp.v.sum() / (1 - pp.u[0])])
        assert max(np.abs(r1).max(), np.abs(r2).max()) < 1e-15

    def test_two_code_paths(self, rng):
        p = registry_get("lin-simplex", n=3)
        k = make_kernel("entropy")
        pp = perturb(p, k, 0.1, seed=11)
        for _ in range(10):
            x = rng.uniform(0.1, 1.0, 3)
            y = rng.standard_normal(1)
            r1, r2 = perturbed_residual_system(pp, k, x, y)
            alt = x * (pp.oracle.subgrad(x) - y[0])  # H^{-1}(d_v - A^T y) with d_v = d + H v
            np.testing.assert_allclose(r1, alt, atol=1e-12)
            assert abs(r2[0] - (x.sum() - 1 + pp.u[0])) < 1e-12
            assert np.linalg.norm(r1) > 0

    def test_unperturbed_stable_point(self):
        p = registry_get("flat-simplex", n=2)
        pp = perturb(p, "entropy", 0.0)
        r1, r2 = perturbed_residual_system(pp, "entropy", [0.3, 0.7], [0.0])
        assert np.all(r1 == 0) and np.all(r2 == 0)


class TestScan:
    def test_single_cluster_n2(self):
        p = registry_get("flat-simplex", n=2)
        pp = perturb(p, "entropy", 0.01, seed=2)
        scan = scan_stable_roots(pp, "entropy", spacing=1e-3)
        assert len(scan.clusters) == 1
        x, _, res = solve_perturbed_stable_point(pp, "entropy", scan.clusters[0].mean(axis=0))
        np.testing.assert_allclose(x, (1 - pp.u[0]) * pp.v / pp.v.sum(), atol=1e-10)
        assert res < 1e-12

    def test_unperturbed_continuum(self):
        scan = scan_stable_roots(perturb(registry_get("flat-simplex", n=2), "entropy", 0.0),
                                 "entropy", spacing=1e-3)
        assert scan.n_roots == 999

    def test_unsupported(self):
        pp = perturb(registry_get("ball-abs"), "ball", 0.01)
        with pytest.raises(UnsupportedRegion):
            scan_stable_roots(pp, "ball")


class TestSlackSign:
    def test_worked(self):
        assert slack_sign_check_psd(np.eye(2), -np.eye(2))
        assert slack_sign_check_psd(np.diag([1.0, 2.0]), -np.eye(2))
        assert slack_sign_check_psd(svec(np.diag([1.0, 2.0])), svec(-np.eye(2)))
        assert not slack_sign_check_psd(np.eye(2), np.diag([-1.0, 1.0]))

    def test_not_pd(self):
        with pytest.raises(DomainViolation):
            slack_sign_check_psd(np.diag([1.0, -1.0]), -np.eye(2))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_negative_definite_v(self, seed):
        r = np.random.default_rng(seed)
        B, C = r.standard_normal((2, 3, 3))
        X = B @ B.T + 0.1 * np.eye(3)
        V = -(C @ C.T + 0.1 * np.eye(3))
        assert slack_sign_check_psd(X, V)


def test_reparameterization_scalings():
    x = np.array([0.2, 0.5, 1.0])
    out = reparameterization_check(x)
    # grad G^T grad G equals 2x for x = y o y / 2 and x for x = y o y / 4
    assert out["half"] == pytest.approx(1.0)
    assert out["quarter"] == pytest.approx(0.0, abs=1e-15)
