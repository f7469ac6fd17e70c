"""Reference quadrature rules and one-dimensional Lagrange bases."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre rule with ``n`` points on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_lobatto_nodes(degree):
    """Gauss-Lobatto nodes on [0, 1] for a polynomial of the given degree.

    Degree 0 returns the midpoint.
    """
    if degree == 0:
        return np.array([0.5])
    if degree == 1:
        return np.array([0.0, 1.0])
    interior = np.polynomial.legendre.Legendre.basis(degree).deriv().roots()
    nodes = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    return 0.5 * (nodes + 1.0)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Exact for polynomials of total degree ``degree``; weights are positive
    and sum to 1/2.
    """
    n = max(1, (degree + 2) // 2)
    # Gauss-Jacobi(1, 0) in the collapsed direction absorbs the Duffy Jacobian
    a, wa = roots_jacobi(n, 1.0, 0.0)
    b, wb = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (a + 1.0)
    wa = wa / 4.0
    b = 0.5 * (b + 1.0)
    wb = 0.5 * wb
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    x = A.ravel()
    y = ((1.0 - A) * B).ravel()
    w = (WA * WB).ravel()
    return np.column_stack([x, y]), w


class LagrangeBasis1D:
    """Nodal Lagrange basis on [0, 1] for the given nodes."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        n = len(self.nodes)
        V = np.vander(self.nodes, n, increasing=True)
        self._coef = np.linalg.inv(V)  # columns: monomial coefficients of each basis fn
        self._dcoef = np.arange(1, n)[:, None] * self._coef[1:]

    @property
    def size(self):
        return len(self.nodes)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        n = self.size
        P = s[..., None] ** np.arange(n)
        return P @ self._coef

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        n = self.size
        if n == 1:
            return np.zeros(s.shape + (1,))
        P = s[..., None] ** np.arange(n - 1)
        return P @ self._dcoef


@lru_cache(maxsize=None)
def temporal_basis(degree):
    """Lagrange basis of the given degree on Gauss-Lobatto nodes of [0, 1]."""
    return LagrangeBasis1D(gauss_lobatto_nodes(degree))
