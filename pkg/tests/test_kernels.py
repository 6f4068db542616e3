import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrierflow.errors import (ConfigError, DomainViolation, ExtensionUnavailable,
                                RangeViolation, SingularMetric)
from barrierflow.kernels import (KERNEL_IDS, BallKernel, MetricWorkspace, PowerKernel, local_norm,
                                 make_kernel, smat, svec)
from helpers import random_interior


def fd_grad(k, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (k.value(x + e) - k.value(x - e)) / (2 * h)
    return g


class TestSvec:
    def test_roundtrip(self, rng):
        B = rng.standard_normal((4, 4))
        X = B + B.T
        np.testing.assert_allclose(smat(svec(X)), X, atol=1e-15)

    def test_isometry(self, rng):
        B, C = rng.standard_normal((2, 3, 3))
        X, Y = B + B.T, C + C.T
        assert svec(X) @ svec(Y) == pytest.approx(np.trace(X @ Y), rel=1e-13)

    def test_non_triangular_length(self):
        with pytest.raises(DomainViolation):
            smat(np.ones(4))


class TestClosedForms:
    """Values worked out by hand for each kernel."""

    def test_entropy(self):
        k = make_kernel("entropy")
        x = np.array([1.0, np.e])
        assert k.value(x) == pytest.approx(-1.0 + 0.0)
        np.testing.assert_allclose(k.grad(x), [0.0, 1.0])
        np.testing.assert_allclose(k.hess_inv(x), np.diag(x))

    def test_neglog(self):
        k = make_kernel("neglog")
        x = np.array([0.5, 2.0])
        np.testing.assert_allclose(k.grad(x), [-2.0, -0.5])
        np.testing.assert_allclose(k.hess_apply(x, [1.0, 1.0]), [4.0, 0.25])
        assert k.theta(x) == 2

    def test_power(self):
        k = make_kernel("power:1.5")
        x = np.array([4.0])
        # t^(1/2) / (0.5 * -0.5) = -4 sqrt(t)
        assert k.value(x) == pytest.approx(-8.0)
        np.testing.assert_allclose(k.grad(x), [-1.0])
        np.testing.assert_allclose(k.hess_apply(x, [1.0]), [4.0**-1.5])

    def test_ball(self):
        k = make_kernel("ball")
        x = np.array([0.6, 0.0])
        assert k.value(x) == pytest.approx(-0.8)
        np.testing.assert_allclose(k.grad(x), [0.75, 0.0])
        np.testing.assert_allclose(k.hess_inv(x), 0.8 * np.diag([0.64, 1.0]))

    def test_logdet(self):
        k = make_kernel("logdet")
        X = np.diag([1.0, 2.0])
        assert k.value(svec(X)) == pytest.approx(-np.log(2.0))
        np.testing.assert_allclose(smat(k.grad(svec(X))), -np.diag([1.0, 0.5]))
        V = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(smat(k.hess_inv_apply(svec(X), svec(V))), X @ V @ X)
        assert k.theta(svec(X)) == 2


@pytest.mark.parametrize("kid", KERNEL_IDS)
class TestDerivatives:
    def test_gradient_fd(self, kid, rng):
        k = make_kernel(kid)
        for _ in range(10):
            x = random_interior(kid, rng)
            np.testing.assert_allclose(k.grad(x), fd_grad(k, x), rtol=1e-5, atol=1e-7)

    def test_hessian_fd(self, kid, rng):
        k = make_kernel(kid)
        h = 1e-6
        for _ in range(10):
            x = random_interior(kid, rng)
            v = rng.standard_normal(x.size)
            fd = (k.grad(x + h * v) - k.grad(x - h * v)) / (2 * h)
            np.testing.assert_allclose(k.hess_apply(x, v), fd, rtol=1e-5, atol=1e-7)

    def test_inverse_pair(self, kid, rng):
        k = make_kernel(kid)
        x = random_interior(kid, rng)
        v = rng.standard_normal(x.size)
        np.testing.assert_allclose(k.hess_inv_apply(x, k.hess_apply(x, v)), v, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(k.hess(x) @ k.hess_inv(x), np.eye(x.size), atol=1e-10)

    def test_mirror_inverse_closed_vs_newton(self, kid, rng):
        k = make_kernel(kid)
        x = random_interior(kid, rng)
        z = k.grad(x)
        np.testing.assert_allclose(k.mirror_inverse(z), x, rtol=1e-10)
        np.testing.assert_allclose(k.mirror_inverse(z, method="newton"), x, rtol=1e-9)

    def test_bregman(self, kid, rng):
        k = make_kernel(kid)
        x, y = random_interior(kid, rng), random_interior(kid, rng)
        assert k.bregman(x, x) == 0.0 or abs(k.bregman(x, x)) < 1e-14
        assert k.bregman(x, y) >= 0.0

    def test_workspace(self, kid, rng):
        k = make_kernel(kid)
        x = random_interior(kid, rng)
        v = rng.standard_normal(x.size)
        ws = MetricWorkspace(k, x)
        np.testing.assert_allclose(ws.hess_apply(v), k.hess_apply(x, v), rtol=1e-10)
        np.testing.assert_allclose(ws.hess_inv_apply(v), k.hess_inv_apply(x, v), rtol=1e-10)
        assert local_norm(k, x, v) ** 2 == pytest.approx(v @ ws.hess_matrix() @ v)


class TestDomain:
    def test_outside_point_rejected(self):
        with pytest.raises(DomainViolation):
            make_kernel("entropy").grad([1.0, -0.1])
        with pytest.raises(DomainViolation):
            make_kernel("ball").grad([0.8, 0.8])
        with pytest.raises(DomainViolation):
            make_kernel("logdet").grad(svec(-np.eye(2)))

    def test_nan_rejected(self):
        with pytest.raises(DomainViolation):
            make_kernel("neglog").value([np.nan, 1.0])

    def test_singular_metric(self):
        with pytest.raises(SingularMetric):
            make_kernel("neglog").hess_apply([1e-300, 1.0], [1.0, 1.0])

    def test_mirror_range(self):
        with pytest.raises(RangeViolation):
            make_kernel("neglog").mirror_inverse([0.5, -1.0])
        with pytest.raises(RangeViolation):
            make_kernel("logdet").mirror_inverse(svec(np.eye(2)))

    def test_extension(self):
        np.testing.assert_allclose(make_kernel("entropy").hess_inv_extended([0.0, 1.0]),
                                   np.diag([0.0, 1.0]))
        np.testing.assert_allclose(BallKernel().hess_inv_extended([0.0, 1.0]), np.zeros((2, 2)))
        with pytest.raises(ExtensionUnavailable):
            make_kernel("logdet").hess_inv_extended(svec(np.eye(2)))

    def test_factory(self):
        assert make_kernel("neg_log").id == "neglog"
        assert make_kernel("power:1.25") == PowerKernel(1.25)
        with pytest.raises(ConfigError):
            make_kernel("nope")
        with pytest.raises(ValueError):
            PowerKernel(2.5)


class TestStrongConvexity:
    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=5))
    @settings(max_examples=50, deadline=None)
    def test_entropy_on_unit_box(self, xs):
        # Bregman >= |x - y|^2 / 2 on the box, as the Hessian dominates the identity there
        k = make_kernel("entropy")
        x = np.array(xs)
        y = np.full_like(x, 0.5)
        assert k.bregman(x, y) >= 0.5 * np.sum((x - y) ** 2) - 1e-12

    @given(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7))
    @settings(max_examples=50, deadline=None)
    def test_ball_everywhere(self, a, b):
        k = make_kernel("ball")
        x = np.array([a, b])
        assert np.linalg.eigvalsh(k.hess(x))[0] >= 1.0 - 1e-12
