import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sttrace.quadrature import LagrangeBasis1D, gauss_legendre, gauss_lobatto_nodes, temporal_basis, triangle_rule


@given(st.integers(1, 8))
def test_gauss_legendre_exact(n):
    x, w = gauss_legendre(n)
    for p in range(2 * n):
        assert abs((w * x**p).sum() - 1.0 / (p + 1)) < 1e-13


def test_gauss_lobatto_nodes_frozen():
    assert np.allclose(gauss_lobatto_nodes(0), [0.5])
    assert np.allclose(gauss_lobatto_nodes(1), [0.0, 1.0])
    assert np.allclose(gauss_lobatto_nodes(2), [0.0, 0.5, 1.0])
    a = 0.5 * (1.0 - 1.0 / math.sqrt(5.0))
    assert np.allclose(gauss_lobatto_nodes(3), [0.0, a, 1.0 - a, 1.0])


@settings(max_examples=30)
@given(st.integers(0, 8), st.data())
def test_triangle_rule_exact(degree, data):
    pts, w = triangle_rule(degree)
    assert np.all(w > 0)
    assert abs(w.sum() - 0.5) < 1e-14
    a = data.draw(st.integers(0, degree))
    b = data.draw(st.integers(0, degree - a))
    exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
    assert abs((w * pts[:, 0] ** a * pts[:, 1] ** b).sum() - exact) < 1e-13


@given(st.integers(0, 5), st.floats(0.0, 1.0))
def test_temporal_basis_partition_of_unity(degree, s):
    b = temporal_basis(degree)
    assert abs(b(np.array([s])).sum() - 1.0) < 1e-12
    assert abs(b.deriv(np.array([s])).sum()) < 1e-10


def test_lagrange_basis_is_nodal():
    b = LagrangeBasis1D([0.0, 0.3, 1.0])
    assert np.allclose(b(b.nodes), np.eye(3))


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_lagrange_derivative_fd(degree):
    b = temporal_basis(degree)
    s, h = np.array([0.37]), 1e-6
    fd = (b(s + h) - b(s - h)) / (2 * h)
    assert np.allclose(b.deriv(s), fd, atol=1e-8)
