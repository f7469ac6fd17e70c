"""Property suites run by ``sttrace verify`` and by the test-suite.

``invariants`` checks structural identities of the discretisation;
``oracles`` compares against values obtained independently (closed forms,
brute-force sampling, dense reference integration).
"""

import math
from dataclasses import dataclass

import numpy as np

from .assembly import MethodParams, assemble_slab, eval_R, manufactured_source
from .cutgeom import (
    build_boundary_quadrature,
    build_prism_quadrature,
    build_surface_quadrature,
    cut_segment,
    detect_active,
)
from .deform import map_points
from .exceptions import ConfigurationError, EmptyActiveSetError
from .femspace import FEFunction, TensorBasis, build_dofmap, deformed_gradient, interpolate_fe
from .mesh import build_structured_mesh, build_time_grid, level_mesh, refine_uniform
from .postproc import compute_eoc, compute_errors
from .scenes import get_scene
from .solver import march, prepare_slab, solve_slab
from .assembly import SlabSystem

UNIT_SQUARE = (-1.0, 1.0, -1.0, 1.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}" + (f" ({self.detail})" if self.detail else "")


def _slab(scene, level, n=1, k_g=1, h_init=0.25, dt_init=0.25):
    mesh = level_mesh(scene.domain, h_init, level)
    grid = build_time_grid(scene.T, dt_init, level)
    ls, topo, deform = prepare_slab(MethodParams(k_gs=k_g, k_gq=k_g), scene, mesh, grid, n)
    return mesh, grid, ls, topo, deform


def _rules(params, ls, topo, mesh, n):
    return (
        build_surface_quadrature(topo, ls, params.L_eff, params.q_s_eff),
        build_prism_quadrature(topo, mesh, n, 2 * params.k_s, params.k_q + 1),
        build_boundary_quadrature(topo, ls, ls.t0, params.q_s_eff),
        build_boundary_quadrature(topo, ls, ls.t1, params.q_s_eff),
    )


# ---------------------------------------------------------------- invariants
def check_transformation_identity(level=2, seed=0):
    """Iterated surface rule vs direct parametrisation of the space-time facets (k = 1)."""
    scene = get_scene("moving_circle")
    mesh, grid, ls, topo, deform = _slab(scene, level, n=2)
    dm = build_dofmap(topo, mesh, 1, 1)
    g = FEFunction(dm, np.random.default_rng(seed).standard_normal(dm.N), ls.t0, ls.t1, mesh)
    surf = build_surface_quadrature(topo, ls, 6, 3)
    geo = map_points(deform, ls, surf.elems, surf.xhat, surf.t)
    iterated = float((surf.weight * geo.meas * g.evaluate(surf.elems, surf.xhat, surf.t)[0]).sum())

    # reference-square parametrisation X(s, tau) of every ruled facet piece
    gs, gw = np.polynomial.legendre.leggauss(12)
    gs, gw = 0.5 * (gs + 1.0), 0.5 * gw
    S, Tq = np.meshgrid(gs, gs, indexing="ij")
    W = np.outer(gw, gw).ravel()
    S, Tq = S.ravel(), Tq.ravel()
    direct = 0.0
    for o, a, b, cut in zip(topo.win_owner, topo.win_t0, topo.win_t1, topo.win_cut):
        if not cut:
            continue
        e = topo.active[o]
        verts = mesh.vertices[mesh.triangles[e]]
        t = a + (b - a) * Tq

        def ends(tt):
            v = ls.vertex_values_at(np.full(1, tt), mesh.triangles[[e]])[0]
            return cut_segment(v, verts)

        P = np.array([ends(tt) for tt in t])  # (n, 2, 2)
        eps = 1e-6 * (b - a)
        Pp = np.array([ends(tt + eps) for tt in t])
        Pm = np.array([ends(tt - eps) for tt in t])
        dP = (Pp - Pm) / (2 * eps)
        X = P[:, 0] + S[:, None] * (P[:, 1] - P[:, 0])
        Xs = np.column_stack([P[:, 1] - P[:, 0], np.zeros(len(S))])
        Xt = np.column_stack([dP[:, 0] + S[:, None] * (dP[:, 1] - dP[:, 0]), np.ones(len(S))])
        dsig = np.linalg.norm(np.cross(Xs, Xt), axis=1)
        xhat = mesh.to_reference(np.full(len(S), e), X)
        el = np.full(len(S), e)
        _, grad, dphi = ls.phi_hat(el, xhat, t)
        V = -dphi / np.linalg.norm(grad, axis=1)
        gv = g.evaluate(el, xhat, t)[0]
        direct += (b - a) * float((W * dsig * gv / np.sqrt(1.0 + V**2)).sum())
    rel = abs(iterated - direct) / abs(direct)
    return CheckResult("transformation-identity", rel <= 1e-6, f"rel {rel:.2e}")


def check_beta_independence(level=1):
    """Assembled matrices for beta in {0, 1/2, 1} coincide on a stationary scene."""
    scene = get_scene("stationary_circle", radius=0.5)
    mesh, grid, ls, topo, deform = _slab(scene, level, n=2)
    mats = []
    for beta in (0.0, 0.5, 1.0):
        p = MethodParams(beta=beta)
        dm = build_dofmap(topo, mesh, p.k_s, p.k_q)
        sys_ = assemble_slab(p, scene, ls, topo, deform, dm, *_rules(p, ls, topo, mesh, 2), None)
        mats.append(sys_.A.toarray())
    diff = max(np.abs(m - mats[0]).max() for m in mats[1:])
    return CheckResult("beta-independence", diff <= 1e-12, f"max diff {diff:.1e}")


def geometry_distances(scene, levels, k_g=2, h_init=0.25, dt_init=0.25, n_times=5):
    """max |dist(Theta(Gamma_lin(t)), Gamma(t))| per level, sampled at off-node times."""
    out = []
    for lev in levels:
        mesh = level_mesh(scene.domain, h_init, lev)
        grid = build_time_grid(scene.T, dt_init, lev)
        worst = 0.0
        for n in (1, grid.N // 2 + 1, grid.N):
            ls, topo, deform = prepare_slab(MethodParams(k_gs=k_g, k_gq=k_g), scene, mesh, grid, n)
            for s in (np.arange(n_times) + 0.5) / n_times:
                t = ls.t0 + s * ls.dt
                rule = build_boundary_quadrature(topo, ls, t, 4)
                y = deform.spatial(rule.elems, rule.xhat, rule.t)[0]
                cp, _ = scene.closest_point(y, rule.t)
                worst = max(worst, float(np.linalg.norm(y - cp, axis=1).max()))
        out.append(worst)
    return out


def check_geometry_order(levels=(2, 3, 4), k_g=2):
    """Geometry error of Theta(Gamma_lin) decays at least like h^(k_g + 0.7) (finest pair)."""
    res = []
    for name in ("stationary_circle", "moving_circle"):
        d = geometry_distances(get_scene(name), levels, k_g)
        eoc = compute_eoc(d)
        res.append((name, eoc[-1]))
    ok = all(e is not None and e >= k_g + 0.7 for _, e in res)
    return CheckResult("geometry-order", ok, ", ".join(f"{n} eoc {e:.2f}" for n, e in res))


def stabilization_energy(level, k=1):
    """s(I_h u_perp, I_h u_perp) on slab 1 of the moving circle."""
    scene = get_scene("moving_circle")
    mesh, grid, ls, topo, deform = _slab(scene, level, n=1, k_g=k)
    p = MethodParams(k_s=k, k_q=k, k_gs=k, k_gq=k)
    dm = build_dofmap(topo, mesh, k, k)
    ext = lambda y, t: scene.extension(y, np.full(len(y), t))[0]
    fn = interpolate_fe(ext, dm, mesh, ls.t0, ls.t1, deform=deform)
    sys_ = assemble_slab(p, scene, ls, topo, deform, dm, *_rules(p, ls, topo, mesh, 1), None, collect=True)
    S = sys_.parts["stab"]
    return float(fn.coeffs @ (S @ fn.coeffs))


def check_stabilization_consistency(levels=(1, 2, 3), k=1):
    vals = [stabilization_energy(lev, k) for lev in levels]
    eoc = compute_eoc(vals)
    ok = all(e is not None and e >= 2 * k - 1 for e in eoc)
    return CheckResult("stabilization-consistency", ok, "eoc " + ", ".join(f"{e:.2f}" for e in eoc))


def check_constant_solution(value=2.0):
    scene = get_scene("stationary_circle", radius=0.5, solution="constant", value=value)
    worst = 0.0
    for beta in (0.0, 0.5, 1.0):
        p = MethodParams(beta=beta, source="zero")
        sol = march(p, scene, level_mesh(scene.domain, 0.25, 1), build_time_grid(0.5, 0.125, 0))
        worst = max(worst, max(np.abs(rec.solution.coeffs - value).max() for rec in sol.slabs))
    return CheckResult("constant-solution", worst <= 1e-10, f"max dev {worst:.1e}")


def quadrature_l_series(level=2, Ls=(2, 3, 4, 5, 6, 8)):
    scene = get_scene("moving_circle")
    mesh, grid, ls, topo, deform = _slab(scene, level, n=2)
    out = []
    for L in Ls:
        q = build_surface_quadrature(topo, ls, L, 3)
        f = np.exp(q.t) * np.cos(3 * q.x[:, 0]) + q.x[:, 1] ** 2
        out.append(float((q.weight * f).sum()))
    return dict(zip(Ls, out))


def check_quadrature_l_convergence():
    vals = quadrature_l_series()
    ref = vals[max(vals)]
    worst = max(abs(v - ref) / abs(ref) for L, v in vals.items() if L >= 4)
    return CheckResult("quadrature-L-convergence", worst <= 1e-8, f"max rel change {worst:.1e}")


def check_partition_of_unity(seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k_s, k_q in ((1, 0), (1, 1), (2, 2), (3, 1)):
        xi = rng.random((200, 2))
        xi = np.where(xi.sum(1, keepdims=True) > 1, 1 - xi, xi)
        val, grad = TensorBasis(k_s, k_q)(xi, rng.random(200))
        worst = max(worst, np.abs(val.sum(1) - 1).max(), np.abs(grad.sum(1)).max())
    return CheckResult("partition-of-unity", worst <= 1e-13, f"max dev {worst:.1e}")


def check_polynomial_reproduction(seed=2):
    scene = get_scene("moving_circle")
    worst = 0.0
    for k in (1, 2):
        mesh, grid, ls, topo, deform = _slab(scene, 1, n=1)
        dm = build_dofmap(topo, mesh, k, k)
        # degree (k, k) in (x, t)
        f = lambda x, t: (x[:, 0] ** k - 2 * x[:, 1] + 1) * (1 + t**k) + x[:, 0] * x[:, 1] ** (k - 1)
        fn = interpolate_fe(f, dm, mesh, ls.t0, ls.t1)
        surf = build_surface_quadrature(topo, ls, 3, 3)
        v, _ = fn.evaluate(surf.elems, surf.xhat, surf.t)
        worst = max(worst, np.abs(v - f(surf.x, surf.t)).max())
    return CheckResult("polynomial-reproduction", worst <= 1e-12, f"max dev {worst:.1e}")


def check_gradient_fd(seed=3, eps=1e-6):
    """Basis gradients and deformed FE gradients against central differences."""
    rng = np.random.default_rng(seed)
    basis = TensorBasis(2, 2)
    xi = rng.uniform(0.1, 0.4, (50, 2))
    s = rng.uniform(0.1, 0.9, 50)
    _, grad = basis(xi, s)
    fd = np.empty_like(grad)
    for c in range(3):
        d = np.zeros(3)
        d[c] = eps
        vp, _ = basis(xi + d[:2], s + d[2])
        vm, _ = basis(xi - d[:2], s - d[2])
        fd[:, :, c] = (vp - vm) / (2 * eps)
    err_basis = np.abs(fd - grad).max()

    # deformed gradient: compare with d/dy of v o Theta^{-1} via perturbed reference points
    scene = get_scene("moving_circle")
    mesh, grid, ls, topo, deform = _slab(scene, 1, n=1, k_g=2)
    dm = build_dofmap(topo, mesh, 2, 2)
    fn = FEFunction(dm, rng.standard_normal(dm.N), ls.t0, ls.t1, mesh)
    idx = rng.integers(0, topo.n_active, 20)
    el = topo.active[idx]
    xh = np.full((20, 2), 1.0 / 3.0) + rng.uniform(-0.1, 0.1, (20, 2))
    t = ls.t0 + rng.uniform(0.2, 0.8, 20) * ls.dt
    geo = map_points(deform, ls, el, xh, t)
    _, g = fn.evaluate(el, xh, t)
    gy = deformed_gradient(g, geo)
    # chain rule check: grad_(x,t) v = D^T grad_(y,t) v with D from finite differences of Theta
    D = np.empty((20, 3, 3))
    B = mesh.affine[0][el]
    for c in range(3):
        d = np.zeros(3)
        d[c] = eps
        dx = d[:2]
        xh_p = xh + np.linalg.solve(B, np.broadcast_to(dx, (20, 2))[..., None])[..., 0]
        xh_m = xh - np.linalg.solve(B, np.broadcast_to(dx, (20, 2))[..., None])[..., 0]
        yp = deform.spatial(el, xh_p, t + d[2])[0]
        ym = deform.spatial(el, xh_m, t - d[2])[0]
        D[:, :2, c] = (yp - ym) / (2 * eps)
        D[:, 2, c] = d[2] / eps
    err_D = np.abs(D - geo.D).max()
    back = np.einsum("nji,nj->ni", D, gy)
    err_chain = np.abs(back - g).max() / max(1.0, np.abs(g).max())
    worst = max(err_basis, err_D, err_chain)
    return CheckResult(
        "gradient-vs-finite-difference",
        worst <= 1e-7,
        f"basis {err_basis:.1e}, jacobian {err_D:.1e}, chain {err_chain:.1e}",
    )


INVARIANTS = (
    check_transformation_identity,
    check_beta_independence,
    check_geometry_order,
    check_stabilization_consistency,
    check_constant_solution,
    check_quadrature_l_convergence,
    check_partition_of_unity,
    check_polynomial_reproduction,
    check_gradient_fd,
)


# ------------------------------------------------------------------- oracles
def oracle_mesh_counts():
    cases = [((-1, 1, -1, 1), 2.0**-3, 289, 512), ((-1, 1, -1, 1), 2.0**-2, 81, 128), ((-1, 1, -1, 1), 2.0, 4, 2), ((-3, 3, -3, 3), 0.5, 169, 288)]
    ok = all(
        (m := build_structured_mesh(d, h)).n_vertices == nv and m.n_triangles == nt for d, h, nv, nt in cases
    )
    m = build_structured_mesh((-1, 1, -1, 1), 2.0)
    r2 = refine_uniform(refine_uniform(m))
    ok &= r2.n_triangles == 32 and math.isclose(r2.h, m.h / 4)
    return CheckResult("mesh-counts", ok)


def oracle_time_grid():
    ok = build_time_grid(1.0, 2.0**-3, 0).N == 8 and build_time_grid(1.0, 2.0**-3, 2).N == 32
    try:
        build_time_grid(1.0, 0.3, 0)
        ok = False
    except ConfigurationError:
        pass
    return CheckResult("time-grid", ok)


def oracle_cut_segment():
    p, q = cut_segment([1.0, -1.0, -1.0])
    ok = np.allclose(p, [0.5, 0.0], atol=1e-15) and np.allclose(q, [0.0, 0.5], atol=1e-15)
    ok &= cut_segment([1.0, 1.0, 1.0]) is None
    p, q = cut_segment([1.0, -1.0, 0.0])
    ends = sorted([tuple(np.round(p, 9)), tuple(np.round(q, 9))])
    ok &= np.allclose(ends, [(0.0, 1.0), (0.5, 0.0)], atol=1e-9)
    return CheckResult("cut-segment", bool(ok))


def oracle_active_count(level=0, samples=100):
    """Active set on the stationary circle vs brute-force sampling of sign changes."""
    scene = get_scene("stationary_circle", radius=0.5)
    mesh = level_mesh(scene.domain, 2.0**-3, level)
    grid = build_time_grid(1.0, 0.25, 0)
    ls, topo, _ = prepare_slab(MethodParams(), scene, mesh, grid, 1)
    ts = ls.t0 + (np.arange(samples) + 0.5) / samples * ls.dt
    vals = np.stack([ls.vertex_values_at(np.full(1, t)[0])[mesh.triangles] for t in ts])
    brute = int(np.sum(np.any((vals.min(axis=2) < 0) & (vals.max(axis=2) > 0), axis=0)))
    return CheckResult("active-set-count", brute == topo.n_active, f"{topo.n_active} vs {brute}")


def oracle_polyline_length():
    """Stationary circle: quadrature total equals the polyline length times dt."""
    scene = get_scene("stationary_circle", radius=0.5)
    mesh, grid, ls, topo, deform = _slab(scene, 1, n=1)
    q = build_surface_quadrature(topo, ls, 4, 2)
    length = 0.0
    for e in topo.active:
        seg = cut_segment(ls.vertex_values_at(ls.t0)[mesh.triangles[e]], mesh.vertices[mesh.triangles[e]])
        if seg is not None:
            length += float(np.linalg.norm(seg[1] - seg[0]))
    rel = abs(q.total - length * ls.dt) / (length * ls.dt)
    return CheckResult("polyline-length", rel <= 1e-12, f"rel {rel:.1e}")


def oracle_dense_time(level=1, samples=1001):
    """Moving circle: quadrature total vs trapezoid over dense-time polyline lengths."""
    scene = get_scene("moving_circle")
    mesh, grid, ls, topo, deform = _slab(scene, level, n=2)
    q = build_surface_quadrature(topo, ls, 4, 2)
    ts = np.linspace(ls.t0, ls.t1, samples)
    lengths = [build_boundary_quadrature(topo, ls, t, 1).total for t in ts]
    ref = float(np.trapezoid(lengths, ts))
    rel = abs(q.total - ref) / ref
    return CheckResult("dense-time-quadrature", rel <= 1e-6, f"rel {rel:.1e}")


def oracle_prism_integral():
    """x^2 y t over the unit square x [0, 1] equals 1/12."""
    mesh = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 1.0)
    from .cutgeom import CutTopologySlab

    e = np.empty(0)
    topo = CutTopologySlab(1, 0.0, 1.0, np.arange(mesh.n_triangles), e.astype(int), e, e, e.astype(bool), 1.0)
    q = build_prism_quadrature(topo, mesh, None, 4, 2)
    val = float((q.weight * q.x[:, 0] ** 2 * q.x[:, 1] * q.t).sum())
    return CheckResult("prism-integral", abs(val - 1 / 12) <= 1e-12, f"{val:.15f}")


def oracle_laplace_beltrami():
    """u = x on the stationary unit circle: f = x (since -Delta_Gamma x = x)."""
    scene = get_scene("stationary_circle", radius=1.0, solution="x", domain=(-2, 2, -2, 2))
    th = np.linspace(0, 2 * np.pi, 17)
    x = np.column_stack([np.cos(th), np.sin(th)])
    f = manufactured_source(scene, x, 0.3)
    err = np.abs(f - x[:, 0]).max()
    return CheckResult("laplace-beltrami-eigenfunction", err <= 1e-12, f"max dev {err:.1e}")


def normal_velocity_errors(levels=(2, 3, 4)):
    """|V_h + 0.1125| at (0.95, 0), t = 0, per level (k = 1, Theta = id)."""
    from .mesh import locate_points

    scene = get_scene("moving_circle")
    out = []
    for lev in levels:
        mesh, grid, ls, topo, deform = _slab(scene, lev, n=1)
        el, xh = locate_points(mesh, np.array([0]), np.array([[0.95, 0.0]]))
        geo = map_points(deform, ls, el, xh, np.zeros(1))
        out.append(abs(geo.V[0] + 0.1125))
    return out


def oracle_normal_velocity():
    """V_h at (0.95, 0), t = 0 approaches w.n = -0.1125 at first order."""
    err = normal_velocity_errors()
    eoc = compute_eoc(err)
    ok = all(e is not None and e >= 0.8 for e in eoc)
    return CheckResult("normal-velocity", ok, "errors " + ", ".join(f"{e:.2e}" for e in err))


def oracle_r_stationary():
    scene = get_scene("stationary_circle", radius=0.5)
    mesh, grid, ls, topo, deform = _slab(scene, 1, n=1)
    b = build_boundary_quadrature(topo, ls, ls.t1, 2)
    geo = map_points(deform, ls, b.elems, b.xhat, b.t)
    R = eval_R(geo, scene.w(geo.y, b.t))
    err = np.abs(R - 1).max()
    return CheckResult("R-stationary", err <= 1e-14, f"max |R-1| {err:.1e}")


def oracle_small_solve():
    import scipy.sparse as sp

    c = solve_slab(SlabSystem(sp.csr_matrix([[2.0]]), np.array([4.0])))
    rng = np.random.default_rng(4)
    M = rng.standard_normal((50, 50))
    A = sp.csr_matrix(M @ M.T + 50 * np.eye(50))
    b = rng.standard_normal(50)
    x = solve_slab(SlabSystem(A, b))
    res = np.linalg.norm(A @ x - b)
    return CheckResult("small-solves", bool(np.allclose(c, [2.0]) and res <= 1e-10), f"residual {res:.1e}")


def oracle_eoc():
    ok = compute_eoc([0.1, 0.05]) == [1.0] and abs(compute_eoc([0.1, 0.025])[0] - 2.0) < 1e-14
    ok &= compute_eoc([0.1, 0.1]) == [0.0] and compute_eoc([0.1, 0.0]) == [None]
    return CheckResult("eoc-formula", ok)


def oracle_exit_guard():
    """A surface outside the domain gives an empty-active-set error."""
    from .scenes import MovingLine

    scene = MovingLine(offset=5.0)
    try:
        march(MethodParams(source="zero"), scene, level_mesh(scene.domain, 0.5, 0), build_time_grid(1.0, 0.5, 0))
    except EmptyActiveSetError as exc:
        return CheckResult("empty-active-guard", exc.slab == 1)
    return CheckResult("empty-active-guard", False, "no error raised")


def oracle_constant_error():
    """Error norms of an exactly representable constant solution vanish."""
    scene = get_scene("stationary_circle", radius=0.5, solution="constant", value=1.5)
    sol = march(MethodParams(source="zero"), scene, level_mesh(scene.domain, 0.25, 1), build_time_grid(0.5, 0.125, 0))
    rep = compute_errors(sol)
    return CheckResult("constant-error", rep.energy <= 1e-11, f"energy {rep.energy:.1e}")


ORACLES = (
    oracle_mesh_counts,
    oracle_time_grid,
    oracle_cut_segment,
    oracle_active_count,
    oracle_polyline_length,
    oracle_dense_time,
    oracle_prism_integral,
    oracle_laplace_beltrami,
    oracle_normal_velocity,
    oracle_r_stationary,
    oracle_small_solve,
    oracle_eoc,
    oracle_exit_guard,
    oracle_constant_error,
)

SUITES = {"invariants": INVARIANTS, "oracles": ORACLES}


def run_suite(name, echo=None):
    """Run every check of a suite; exceptions count as failures."""
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for check in SUITES[name]:
        try:
            res = check()
        except Exception as exc:  # report, keep going
            res = CheckResult(check.__name__, False, f"{type(exc).__name__}: {exc}")
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
