import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sttrace.cutgeom import (
    build_boundary_quadrature,
    build_prism_quadrature,
    build_surface_quadrature,
    cut_segment,
    detect_active,
)
from sttrace.exceptions import DegenerateCutError

finite = st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-6)


def test_cut_segment_frozen():
    p, q = cut_segment([-1.0, 1.0, 1.0])
    assert np.allclose(p, [0.5, 0.0]) and np.allclose(q, [0.0, 0.5])
    assert cut_segment([1.0, 2.0, 3.0]) is None
    p, q = cut_segment([-1.0, 1.0, 1.0], vertices=[[0, 0], [2, 0], [0, 2]])
    assert np.allclose(p, [1.0, 0.0]) and np.allclose(q, [0.0, 1.0])


def test_cut_segment_all_zero():
    with pytest.raises(DegenerateCutError):
        cut_segment([0.0, 0.0, 0.0])


def test_cut_segment_zero_vertex_tie_break():
    # a zero vertex counts as positive: one sign change left
    p, q = cut_segment([0.0, -1.0, -1.0])
    assert np.allclose(p, [0.0, 0.0], atol=1e-11) and np.allclose(q, [0.0, 0.0], atol=1e-11)
    assert cut_segment([0.0, 1.0, 1.0]) is None


@settings(max_examples=100)
@given(finite, finite, finite)
def test_cut_segment_endpoints_on_zero_level(a, b, c):
    v = np.array([a, b, c])
    assume(np.sign(v).min() != np.sign(v).max())
    p, q = cut_segment(v)
    for z in (p, q):
        lam = np.array([1 - z.sum(), *z])
        assert lam.min() >= -1e-12
        assert abs(lam @ v) <= 1e-10 * np.abs(v).max()


def test_active_set_circle_level1(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    assert topo.n_active == 91 and len(topo.win_owner) == 223
    assert np.all(np.diff(topo.active) > 0)
    for i in range(topo.n_active):
        bp = topo.breakpoints(i)
        assert bp[0] == topo.t0 and bp[-1] == topo.t1 and np.all(np.diff(bp) > 0)
    assert np.array_equal(topo.local_index(topo.active), np.arange(topo.n_active))


def test_active_iff_sign_change_somewhere(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    ts = np.linspace(ls.t0, ls.t1, 41)
    vv = ls.vertex_values_at(ts)[mesh.triangles]  # (nt, 3, nts)
    changes = (vv.min(axis=1) < 0) & (vv.max(axis=1) > 0)
    sampled = np.flatnonzero(changes.any(axis=1))
    assert set(sampled) <= set(topo.active)


def test_surface_quadrature_length(moving_circle, slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    q = build_surface_quadrature(topo, ls, 4, 2)
    assert abs(q.total - 0.3437737627635694) < 1e-12
    # against the exact space-time integral of the perimeter
    tq, wq = np.polynomial.legendre.leggauss(8)
    t = ls.t0 + 0.5 * (tq + 1) * ls.dt
    exact = 0.5 * ls.dt * (wq * 2 * math.pi * moving_circle.radius(t)).sum()
    assert abs(q.total - exact) / exact < 0.02
    assert np.all(np.diff(q.owner) >= 0)
    assert np.allclose(ls.phi_hat(q.elems, q.xhat, q.t)[0], 0.0, atol=1e-12)


def test_boundary_quadrature_on_slice(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    b = build_boundary_quadrature(topo, ls, ls.t1, 3)
    assert np.allclose(b.t, ls.t1)
    assert abs(b.total - 2 * math.pi * 0.45 * math.exp(-ls.t1 / 4)) < 0.05


def test_prism_quadrature_volume(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    p = build_prism_quadrature(topo, mesh, 1, 2, 2)
    vol = mesh.areas[topo.active].sum() * ls.dt
    assert abs((p.weight * 1.0).sum() - vol) < 1e-13


def test_detect_active_empty():
    from sttrace.mesh import build_time_grid, level_mesh
    from sttrace.levelset import interpolate_levelset
    from sttrace.scenes import get_scene

    sc = get_scene("moving_line", offset=5.0)
    mesh = level_mesh(sc.domain, 0.5, 0)
    ls = interpolate_levelset(sc, mesh, build_time_grid(1.0, 0.5), 1, 1, 1)
    assert detect_active(ls).n_active == 0
