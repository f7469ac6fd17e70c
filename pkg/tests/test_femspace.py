import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sttrace.femspace import FEFunction, TensorBasis, build_dofmap, deformed_gradient, eval_fe, interpolate_fe


@settings(max_examples=40)
@given(st.integers(1, 3), st.integers(0, 3), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_partition_of_unity(k_s, k_q, a, b, s):
    basis = TensorBasis(k_s, k_q)
    xh = np.array([[a * (1 - b), b]])
    val, grad = basis(xh, np.array([s]))
    assert val.shape == (1, basis.size)
    assert abs(val.sum() - 1.0) < 1e-12
    assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-9)


def test_tensor_index_convention():
    basis = TensorBasis(1, 1)
    val, _ = basis(np.array([[0.0, 0.0]]), np.array([1.0]))
    # spatial function 0 times temporal function 1 (s = 1)
    assert np.isclose(val[0, 0 * 2 + 1], 1.0) and np.isclose(val.sum(), 1.0)


def test_invalid_orders():
    with pytest.raises(ValueError):
        TensorBasis(0, 1)


def test_dofmap_counts(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    dm = build_dofmap(topo, mesh, 1, 1)
    nodes = np.unique(mesh.triangles[topo.active])
    assert dm.N == 2 * len(nodes)
    assert dm.cell_dofs.shape == (topo.n_active, 6)
    assert set(np.unique(dm.cell_dofs)) == set(range(dm.N))
    dm2 = build_dofmap(topo, mesh, 2, 2)
    assert dm2.cell_dofs.shape == (topo.n_active, 18)


@pytest.mark.parametrize("k_s,k_q", [(1, 1), (2, 2), (3, 1)])
def test_polynomial_reproduction(slab_l1, k_s, k_q):
    mesh, grid, ls, topo, deform = slab_l1

    def f(x, t):
        return (x[:, 0] ** k_s - 2 * x[:, 1] + 0.5) * (1 + t**k_q)

    dm = build_dofmap(topo, mesh, k_s, k_q)
    fn = interpolate_fe(f, dm, mesh, ls.t0, ls.t1)
    rng = np.random.default_rng(3)
    e = rng.choice(topo.active, 30)
    xh = rng.dirichlet([1, 1, 1], 30)[:, 1:]
    t = rng.uniform(ls.t0, ls.t1, 30)
    v, g = eval_fe(fn, e, xh, t)
    x = mesh.to_physical(e, xh)
    assert np.allclose(v, f(x, t), atol=1e-12)
    gx = k_s * x[:, 0] ** (k_s - 1) * (1 + t**k_q)
    assert np.allclose(g[:, 0], gx, atol=1e-10)


def test_gradient_fd(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    dm = build_dofmap(topo, mesh, 2, 1)
    fn = FEFunction(dm, np.random.default_rng(0).standard_normal(dm.N), ls.t0, ls.t1, mesh)
    e = topo.active[[4, 4, 4]]
    xh = np.array([[0.2, 0.3]] * 3)
    t = ls.t0 + 0.5 * ls.dt
    v, g = fn.evaluate(e[:1], xh[:1], t)
    h = 1e-6
    x = mesh.to_physical(e[:1], xh[:1])
    fd = []
    for d in range(2):
        dx = np.zeros(2)
        dx[d] = h
        vp = fn.evaluate(e[:1], mesh.to_reference(e[:1], x + dx), t)[0]
        vm = fn.evaluate(e[:1], mesh.to_reference(e[:1], x - dx), t)[0]
        fd.append((vp - vm)[0] / (2 * h))
    fd.append((fn.evaluate(e[:1], xh[:1], t + h)[0] - fn.evaluate(e[:1], xh[:1], t - h)[0])[0] / (2 * h))
    assert np.allclose(g[0], fd, atol=1e-7)


def test_deformed_gradient_identity():
    class Geo:
        Ainv = np.broadcast_to(np.eye(2), (2, 2, 2))
        a = np.zeros((2, 2))

    g = np.random.default_rng(1).standard_normal((2, 3))
    assert np.allclose(deformed_gradient(g, Geo), g)


def test_nonstrict_evaluate_marks_missing(slab_l1):
    mesh, grid, ls, topo, deform = slab_l1
    dm = build_dofmap(topo, mesh, 1, 1)
    fn = FEFunction(dm, np.ones(dm.N), ls.t0, ls.t1, mesh)
    inactive = np.setdiff1d(np.arange(mesh.n_triangles), topo.active)[:1]
    v, _ = fn.evaluate(inactive, np.array([[0.2, 0.2]]), ls.t0, strict=False)
    assert np.isnan(v[0])
    with pytest.raises(ValueError):
        FEFunction(dm, np.ones(dm.N + 1), ls.t0, ls.t1, mesh)
