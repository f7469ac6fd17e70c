import numpy as np
import pytest
import scipy.sparse as sp

from sttrace.assembly import MethodParams, SlabSystem
from sttrace.exceptions import EmptyActiveSetError, SolveError
from sttrace.mesh import build_time_grid, level_mesh
from sttrace.scenes import MovingLine, get_scene
from sttrace.solver import march, solve_slab


def test_solve_slab_small():
    assert np.allclose(solve_slab(SlabSystem(sp.csr_matrix([[2.0]]), np.array([4.0]))), [2.0])
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    A = sp.csr_matrix(M @ M.T + 30 * np.eye(30))
    b = rng.standard_normal(30)
    assert np.linalg.norm(A @ solve_slab(SlabSystem(A, b)) - b) < 1e-10
    assert len(solve_slab(SlabSystem(sp.csr_matrix((0, 0)), np.zeros(0)))) == 0


def test_solve_slab_singular():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolveError) as exc:
        solve_slab(SlabSystem(A, np.array([1.0, 0.0])), slab=7)
    assert exc.value.slab == 7


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_constant_solution_exact(beta):
    sc = get_scene("stationary_circle", radius=0.5, solution="constant", value=2.0)
    sol = march(MethodParams(beta=beta, source="zero"), sc, level_mesh(sc.domain, 0.25, 1), build_time_grid(0.5, 0.125))
    assert sol.N == 4
    for rec in sol.slabs:
        assert np.abs(rec.solution.coeffs - 2.0).max() < 1e-10
        assert rec.residual < 1e-10


def test_empty_active_set_reports_slab():
    sc = MovingLine(offset=5.0)
    with pytest.raises(EmptyActiveSetError) as exc:
        march(MethodParams(source="zero"), sc, level_mesh(sc.domain, 0.5, 0), build_time_grid(1.0, 0.5))
    assert exc.value.slab == 1


def test_march_callback_and_records(fitted_l1):
    sol = fitted_l1.solution_
    assert sol.N == 8
    assert [r.n for r in sol.slabs] == list(range(1, 9))
    assert sol[1] is sol.slabs[0]
    assert sol.initial is not None and sol.initial.dofmap.k_q == 0
    seen = []
    sc = get_scene("stationary_circle")
    march(MethodParams(), sc, level_mesh(sc.domain, 0.25, 0), build_time_grid(0.5, 0.25), callback=lambda n, r: seen.append(n))
    assert seen == [1, 2]


def test_march_deterministic():
    sc = get_scene("moving_circle")
    args = (MethodParams(), sc, level_mesh(sc.domain, 0.25, 0), build_time_grid(1.0, 0.25))
    a, b = march(*args), march(*args)
    for ra, rb in zip(a.slabs, b.slabs):
        assert np.array_equal(ra.solution.coeffs, rb.solution.coeffs)
