import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from vblin.calculus import (
    SampleGrid, SeminormOrderError, derivative, gauss_legendre, gl_nodes, jacobian,
    jacobian_blocks, multi_indices, norm_r, partial_fd, seminorm,
)
from vblin.hadamard import BundleMap


def poly(p):
    u, v = p[:, 0], p[:, 1]
    return u ** 3 * v + 2 * u * v ** 2 - v


class TestDerivatives:
    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_first_partials_against_analytic(self, u, v):
        p = np.array([[u, v]])
        assert derivative(poly, p, (1, 0))[0, 0] == pytest.approx(3 * u ** 2 * v + 2 * v ** 2, abs=1e-8)
        assert derivative(poly, p, (0, 1))[0, 0] == pytest.approx(u ** 3 + 4 * u * v - 1, abs=1e-8)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_higher_partials_against_analytic(self, u, v):
        p = np.array([[u, v]])
        assert derivative(poly, p, (1, 1))[0, 0] == pytest.approx(3 * u ** 2 + 4 * v, abs=1e-6)
        assert derivative(poly, p, (0, 2))[0, 0] == pytest.approx(4 * u, abs=1e-6)
        assert derivative(poly, p, (3, 0))[0, 0] == pytest.approx(6 * v, abs=1e-5)
        assert derivative(poly, p, (2, 1))[0, 0] == pytest.approx(6 * u, abs=1e-5)

    def test_partial_fd_scalar(self):
        assert partial_fd(lambda p: np.sin(p[:, 0]), [0.3], 0) == pytest.approx(math.cos(0.3), abs=1e-9)
        assert partial_fd(lambda p: np.sin(p[:, 0]), [0.3], 0, 2) == pytest.approx(-math.sin(0.3), abs=1e-6)
        with pytest.raises(ValueError):
            partial_fd(np.sin, [0.3], 0, 4)
        with pytest.raises(ValueError):
            partial_fd(np.sin, [0.3], 0, 1, step=-1.0)

    def test_order_zero_is_evaluation(self):
        np.testing.assert_array_equal(derivative(poly, [[1.0, 2.0]], (0, 0)), [[poly(np.array([[1.0, 2.0]]))[0]]])

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            derivative(poly, [[0.0, 0.0]], (2, 2))

    def test_jacobian_shape_and_values(self):
        f = lambda p: np.stack([p[:, 0] * p[:, 1], np.exp(p[:, 0])], axis=1)
        J = jacobian(f, [[1.0, 2.0], [0.0, 1.0]])
        assert J.shape == (2, 2, 2)
        np.testing.assert_allclose(J[0], [[2.0, 1.0], [math.e, 0.0]], atol=1e-8)


def test_jacobian_blocks_against_analytic():
    h = BundleMap.from_expressions(["x+v^2"], ["v*exp(x)"], 1, 1)
    B = jacobian_blocks(h, [0.3], [0.2])
    np.testing.assert_allclose(B.P, [[1.0]], atol=1e-8)
    np.testing.assert_allclose(B.Q, [[0.4]], atol=1e-8)
    np.testing.assert_allclose(B.R, [[0.2 * math.exp(0.3)]], atol=1e-8)
    np.testing.assert_allclose(B.S, [[math.exp(0.3)]], atol=1e-8)
    assert B.full().shape == (2, 2)


def test_zero_section_R_vanishes():
    h = BundleMap.from_expressions(["x+v^2"], ["v*exp(x)", "sin(v)"], 1, 1)
    xs = np.linspace(-1, 1, 7)[:, None]
    B = jacobian_blocks(h, xs, np.zeros((7, 1)))
    assert np.max(np.abs(B.R)) < 1e-12


class TestGrid:
    def test_grid_shape_and_order(self):
        K = SampleGrid(((0, 1), (0, 2)), (2, 3))
        pts = K.points()
        assert K.size == 6 and pts.shape == (6, 2)
        np.testing.assert_array_equal(pts[:3, 0], [0, 0, 0])
        np.testing.assert_array_equal(pts[:3, 1], [0, 1, 2])
        assert K.spacing == (1.0, 1.0)
        assert K.refined(2).counts == (3, 5)

    def test_validation(self):
        with pytest.raises(ValueError):
            SampleGrid(((0, 1),), (1,))
        with pytest.raises(ValueError):
            SampleGrid(((1, 0),), (3,))


def test_multi_indices():
    assert multi_indices([1, 2], 2, 3) == [(0, 2, 0), (0, 1, 1), (0, 0, 2)]


class TestSeminorm:
    def test_monomial_values(self):
        # f = x * v^3 on [0,1] x [-1,1]: fiber derivatives 3xv^2, 6xv, 6x
        f = lambda p: p[:, 0] * p[:, 1] ** 3
        K = SampleGrid(((0, 1), (-1, 1)), (5, 9))
        assert seminorm(f, 0, K, base_dim=1) == pytest.approx(1.0)
        assert seminorm(f, 1, K, base_dim=1) == pytest.approx(3.0, rel=1e-6)
        assert seminorm(f, 2, K, base_dim=1) == pytest.approx(6.0, rel=1e-5)
        assert seminorm(f, 3, K, base_dim=1) == pytest.approx(6.0, rel=1e-5)
        assert norm_r(f, 3, K, base_dim=1) == pytest.approx(16.0, rel=1e-5)

    def test_all_axes(self):
        f = lambda p: p[:, 0] * p[:, 1]
        K = SampleGrid(((0, 1), (0, 2)), (3, 3))
        assert seminorm(f, 1, K, fiber_axes_only=False) == pytest.approx(3.0, rel=1e-8)

    def test_sum_over_components(self):
        f = lambda p: np.stack([p[:, 0], -2 * p[:, 0]], axis=1)
        assert seminorm(f, 1, SampleGrid(((0, 1),), (3,))) == pytest.approx(3.0)

    def test_order_bounds(self):
        K = SampleGrid(((0, 1),), (3,))
        with pytest.raises(SeminormOrderError):
            seminorm(lambda p: p[:, 0], 4, K)
        with pytest.raises(SeminormOrderError):
            norm_r(lambda p: p[:, 0], -1, K)

    @given(st.floats(0.1, 3.0))
    def test_scaling(self, c):
        f = lambda p: np.sin(p[:, 0])
        K = SampleGrid(((-1, 1),), (9,))
        assert seminorm(lambda p: c * f(p), 1, K) == pytest.approx(c * seminorm(f, 1, K), rel=1e-10)


class TestQuadrature:
    @pytest.mark.parametrize("fn", [np.exp, np.cos, lambda s: 1 / (1 + s * s), lambda s: s ** 7])
    def test_against_scipy_quad(self, fn):
        ref, _ = integrate.quad(fn, -0.5, 2.0)
        assert gauss_legendre(fn, -0.5, 2.0) == pytest.approx(ref, rel=1e-13, abs=1e-14)

    def test_exact_for_polynomials(self):
        for n in range(1, 8):
            got = gauss_legendre(lambda s: s ** (2 * n - 1) + s ** (2 * n - 2), 0, 1, nodes=n)
            assert got == pytest.approx(1 / (2 * n) + 1 / (2 * n - 1), rel=1e-13)

    def test_nodes(self):
        s, w = gl_nodes(32, 0, 1)
        assert np.all((s > 0) & (s < 1))
        assert w.sum() == pytest.approx(1.0, rel=1e-14)
        with pytest.raises(ValueError):
            gl_nodes(0)
        with pytest.raises(ValueError):
            gl_nodes(4, 1, 0)

    def test_scalar_only_integrand(self):
        assert gauss_legendre(math.exp, 0, 1) == pytest.approx(math.e - 1, rel=1e-14)

    def test_vector_integrand(self):
        got = gauss_legendre(lambda s: np.stack([s, s * s], axis=-1), 0, 1)
        np.testing.assert_allclose(got, [0.5, 1 / 3], rtol=1e-13)
