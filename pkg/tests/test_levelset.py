import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sttrace.exceptions import DegenerateGradientError
from sttrace.levelset import (
    ZERO_SHIFT,
    build_improved_alpha,
    eval_normals_lin,
    interpolate_levelset,
    oswald_average,
)
from sttrace.mesh import build_time_grid, level_mesh
from sttrace.scenes import get_scene


class _Plane:
    """phi = a.x + b t + c, reproduced exactly by every interpolant."""

    def __init__(self, a=(0.3, -0.7), b=0.4, c=0.1):
        self.a, self.b, self.c = np.asarray(a), b, c

    def phi(self, x, t):
        return x @ self.a + self.b * t + self.c


@pytest.mark.parametrize("k_gs,k_gq", [(1, 1), (2, 2), (3, 1)])
def test_interpolation_reproduces_affine(k_gs, k_gq):
    mesh = level_mesh((-1, 1, -1, 1), 0.5, 1)
    grid = build_time_grid(1.0, 0.25)
    sc = _Plane()
    ls = interpolate_levelset(sc, mesh, grid, 2, k_gs, k_gq)
    rng = np.random.default_rng(1)
    e = rng.integers(0, mesh.n_triangles, 20)
    xh = rng.dirichlet([1, 1, 1], 20)[:, 1:]
    t = rng.uniform(ls.t0, ls.t1, 20)
    v, g, vt = ls.phi_h(e, xh, t)
    x = mesh.to_physical(e, xh)
    assert np.allclose(v, sc.phi(x, t), atol=1e-13)
    assert np.allclose(g, sc.a, atol=1e-12) and np.allclose(vt, sc.b, atol=1e-12)
    vh, gh, vth = ls.phi_hat(e, xh, t)
    assert np.allclose(vh, v, atol=1e-13) and np.allclose(gh, g, atol=1e-12)


def test_slab_end_coefficients_shared(moving_circle):
    mesh = level_mesh(moving_circle.domain, 0.25, 0)
    grid = build_time_grid(1.0, 0.25)
    a = interpolate_levelset(moving_circle, mesh, grid, 1, 2, 2)
    b = interpolate_levelset(moving_circle, mesh, grid, 2, 2, 2)
    assert np.array_equal(a.values[:, -1], b.values[:, 0])


def test_zero_shift_uses_median_scale():
    mesh = level_mesh((-1, 1, -1, 1), 1.0, 0)
    grid = build_time_grid(1.0, 1.0)

    class Sc:
        def phi(self, x, t):
            return x[:, 0]  # the middle column of vertices is exactly zero

    ls = interpolate_levelset(Sc(), mesh, grid, 1, 1, 1)
    vv = ls.vertex_values
    assert ls.scale == 1.0
    assert np.all(vv != 0.0)
    assert np.allclose(vv[mesh.vertices[:, 0] == 0.0], ZERO_SHIFT)
    assert np.sum(ls.values[: mesh.n_vertices] == 0.0) == 6


def test_normals_lin_unit_and_degenerate():
    mesh = level_mesh((-1, 1, -1, 1), 0.5, 0)
    grid = build_time_grid(1.0, 0.5)
    ls = interpolate_levelset(_Plane(), mesh, grid, 1, 1, 1)
    n, ns = eval_normals_lin(ls, [0, 3], np.array([[0.2, 0.2], [0.1, 0.5]]), 0.1)
    a = np.array([0.3, -0.7])
    assert np.allclose(n, a / np.linalg.norm(a))
    assert np.allclose(ns, np.append(a, 0.4) / np.linalg.norm(np.append(a, 0.4)))
    flat = interpolate_levelset(_Plane(a=(0.0, 0.0)), mesh, grid, 1, 1, 1)
    with pytest.raises(DegenerateGradientError):
        eval_normals_lin(flat, [0], np.array([[0.2, 0.2]]), 0.1)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5))
def test_oswald_average_preserves_constants(c):
    cell_nodes = np.array([[0, 1, 2], [1, 3, 2], [3, 4, 2]])
    vals = np.full((3, 3), c)
    assert np.allclose(oswald_average(cell_nodes, vals, 5), c)


def test_oswald_average_continuous():
    rng = np.random.default_rng(0)
    cell_nodes = np.array([[0, 1, 2], [1, 3, 2]])
    out = oswald_average(cell_nodes, rng.standard_normal((2, 3)), 4)
    assert out[0, 1] == out[1, 0] and out[0, 2] == out[1, 2]
    assert np.isclose(out[0, 0], out[0, 0])


def test_improved_alpha_stationary_is_one():
    sc = get_scene("stationary_circle")
    mesh = level_mesh(sc.domain, 0.25, 0)
    grid = build_time_grid(sc.T, 0.25)
    al = build_improved_alpha(sc, mesh, grid, 1, np.arange(10), 1, 1)
    assert np.allclose(al.coeffs, 1.0)


def test_improved_alpha_close_to_exact(moving_circle, slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    al = build_improved_alpha(moving_circle, mesh, grid, 1, topo.active, 1, 1)
    from sttrace.cutgeom import build_surface_quadrature

    q = build_surface_quadrature(topo, ls, 4, 2)
    y = mesh.to_physical(q.elems, q.xhat)
    exact = moving_circle.alpha(y, q.t)
    assert np.all(al.coeffs >= 1.0 - 1e-14)
    assert np.max(np.abs(al(q.elems, y, q.t) - exact)) < 0.2
