import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcbo.kernels import (
    KernelFamily,
    KernelSpec,
    kernel_cross_hessian,
    kernel_eval,
    kernel_grad1,
)

FAMILIES = [KernelFamily.RBF, KernelFamily.MATERN25]


def fd_grad1(spec, x, x2, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (kernel_eval(spec, x + e, x2) - kernel_eval(spec, x - e, x2)) / (2 * h)
    return g


def fd_cross_hessian(spec, x, x2, h=1e-4):
    """Nested central differences: d/dx2_j of the analytic-free FD gradient in x."""
    d = x.size
    H = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        H[:, j] = (fd_grad1(spec, x, x2 + e, h) - fd_grad1(spec, x, x2 - e, h)) / (2 * h)
    return H


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestKernelSpec:
    @pytest.mark.parametrize("ell,kappa", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (np.inf, 1.0), (1.0, np.nan)])
    def test_rejects_invalid_hyperparameters(self, ell, kappa):
        with pytest.raises(ValueError):
            KernelSpec(KernelFamily.RBF, ell, kappa)

    def test_family_from_string(self):
        assert KernelSpec("matern25", 1.0, 1.0).family is KernelFamily.MATERN25

    def test_with_params(self):
        spec = KernelSpec(KernelFamily.RBF, 1.0, 2.0).with_params(lengthscale=0.5)
        assert spec.lengthscale == 0.5 and spec.outputscale == 2.0


class TestKernelEval:
    def test_rbf_on_diagonal(self):
        assert kernel_eval(KernelSpec(KernelFamily.RBF, 1.0, 1.0), [0.3, 0.7], [0.3, 0.7]) == 1.0

    def test_rbf_unit_distance(self):
        val = kernel_eval(KernelSpec(KernelFamily.RBF, 1.0, 1.0), [1.0, 0.0], [0.0, 0.0])
        np.testing.assert_allclose(val, 0.6065306597126334, rtol=1e-14)

    def test_matern_unit_distance(self):
        val = kernel_eval(KernelSpec(KernelFamily.MATERN25, 1.0, 1.0), [0.0, 1.0], [0.0, 0.0])
        expected = (1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5))
        np.testing.assert_allclose(val, expected, rtol=1e-14)
        np.testing.assert_allclose(val, 0.5239941088318203, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(KernelSpec(), [0.0, 1.0], [0.0])

    def test_non_finite_input(self):
        with pytest.raises(ValueError):
            kernel_eval(KernelSpec(), [np.nan, 1.0], [0.0, 0.0])

    @pytest.mark.parametrize("family", FAMILIES)
    @given(
        x=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        x2=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        ell=st.floats(0.05, 5.0),
        kappa=st.floats(0.01, 10.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_stationarity(self, family, x, x2, ell, kappa):
        spec = KernelSpec(family, ell, kappa)
        assert kernel_eval(spec, x, x2) == kernel_eval(spec, x2, x)
        np.testing.assert_allclose(kernel_eval(spec, x, x), kappa, rtol=1e-15)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_gram_positive_definite(self, family):
        rng = np.random.default_rng(3)
        for n in (5, 20, 50):
            X = rng.random((n, 4))
            spec = KernelSpec(family, rng.uniform(0.1, 1.0), rng.uniform(0.5, 2.0))
            np.linalg.cholesky(spec(X, X) + 1e-10 * np.eye(n))

    def test_gram_matches_pointwise(self):
        rng = np.random.default_rng(0)
        X1, X2 = rng.random((4, 3)), rng.random((5, 3))
        spec = KernelSpec(KernelFamily.MATERN25, 0.4, 1.3)
        K = spec(X1, X2)
        for i in range(4):
            for j in range(5):
                assert K[i, j] == pytest.approx(kernel_eval(spec, X1[i], X2[j]), rel=1e-14)


class TestKernelGrad1:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_zero_on_diagonal(self, family):
        x = np.array([0.2, -1.0, 3.0])
        np.testing.assert_array_equal(kernel_grad1(KernelSpec(family, 0.7, 2.0), x, x), np.zeros(3))

    def test_rbf_1d_value(self):
        g = kernel_grad1(KernelSpec(KernelFamily.RBF, 1.0, 1.0), [1.0], [0.0])
        np.testing.assert_allclose(g, [-np.exp(-0.5)], rtol=1e-14)
        np.testing.assert_allclose(g, fd_grad1(KernelSpec(), np.array([1.0]), np.array([0.0])), rtol=1e-9)

    def test_matern_d3_matches_fd(self):
        rng = np.random.default_rng(11)
        spec = KernelSpec(KernelFamily.MATERN25, 0.8, 1.5)
        x, x2 = rng.normal(size=3), rng.normal(size=3)
        assert rel_err(kernel_grad1(spec, x, x2), fd_grad1(spec, x, x2)) < 1e-5


class TestKernelCrossHessian:
    @pytest.mark.parametrize("ell,kappa", [(1.0, 1.0), (0.3, 2.5)])
    def test_rbf_diagonal_closed_form(self, ell, kappa):
        spec = KernelSpec(KernelFamily.RBF, ell, kappa)
        x = np.array([0.1, 0.2, 0.3])
        np.testing.assert_allclose(kernel_cross_hessian(spec, x, x), kappa / ell**2 * np.eye(3), rtol=1e-14)
        np.testing.assert_allclose(fd_cross_hessian(spec, x, x), kappa / ell**2 * np.eye(3), rtol=1e-4, atol=1e-6)

    def test_rbf_d2_matches_nested_fd(self):
        spec = KernelSpec(KernelFamily.RBF, 1.0, 1.0)
        x, x2 = np.array([0.3, 0.1]), np.zeros(2)
        assert rel_err(kernel_cross_hessian(spec, x, x2), fd_cross_hessian(spec, x, x2)) < 1e-4

    @pytest.mark.parametrize("family", FAMILIES)
    def test_diagonal_trace_matches_prior_trace(self, family):
        spec = KernelSpec(family, 0.6, 1.7)
        x = np.full(5, 0.4)
        np.testing.assert_allclose(np.trace(kernel_cross_hessian(spec, x, x)), spec.prior_grad_trace(5), rtol=1e-14)
        if family is KernelFamily.RBF:
            np.testing.assert_allclose(spec.prior_grad_trace(5), 5 * 1.7 / 0.36, rtol=1e-14)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_diagonal_symmetric_psd(self, family):
        rng = np.random.default_rng(5)
        for _ in range(20):
            spec = KernelSpec(family, rng.uniform(0.05, 3), rng.uniform(0.1, 5))
            x = rng.normal(size=4)
            H = kernel_cross_hessian(spec, x, x)
            np.testing.assert_array_equal(H, H.T)
            assert np.linalg.eigvalsh(H).min() >= -1e-10

    def test_matern_diagonal_is_finite_limit(self):
        spec = KernelSpec(KernelFamily.MATERN25, 0.5, 1.0)
        x = np.array([0.25, 0.75])
        near = kernel_cross_hessian(spec, x, x + 1e-9)
        at = kernel_cross_hessian(spec, x, x)
        assert np.all(np.isfinite(at))
        np.testing.assert_allclose(at, near, rtol=1e-6, atol=1e-12)


class TestDerivativeSuite:
    """100 random (spec, x, x') pairs over both families, d up to 6."""

    def test_random_pairs(self):
        rng = np.random.default_rng(2024)
        for i in range(100):
            family = FAMILIES[i % 2]
            d = int(rng.integers(1, 7))
            spec = KernelSpec(family, rng.uniform(0.3, 2.0), rng.uniform(0.5, 2.0))
            x = rng.uniform(-1, 1, d)
            x2 = x + rng.normal(scale=0.5 * spec.lengthscale, size=d)
            assert rel_err(kernel_grad1(spec, x, x2), fd_grad1(spec, x, x2)) < 1e-5
            assert rel_err(kernel_cross_hessian(spec, x, x2), fd_cross_hessian(spec, x, x2)) < 1e-4


class TestLengthscaleDerivative:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_matches_fd(self, family):
        rng = np.random.default_rng(9)
        X = rng.random((6, 3))
        spec = KernelSpec(family, 0.4, 1.3)
        h = 1e-6
        up = spec.with_params(lengthscale=0.4 * np.exp(h))(X, X)
        down = spec.with_params(lengthscale=0.4 * np.exp(-h))(X, X)
        np.testing.assert_allclose(spec.dlog_lengthscale(X, X), (up - down) / (2 * h), rtol=1e-6, atol=1e-10)
