"""Slab matrices and right-hand sides of the stabilized space-time trace method."""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError, UnsupportedSceneError
from .deform import map_points
from .femspace import FEFunction, TensorBasis, deformed_gradient, interpolate_fe

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MethodParams:
    """Discretisation parameters.

    Attributes
    ----------
    beta : float
        Weight moving the material derivative from trial to test function.
    xi_mode : {"h", "1/h", "zero"}
        Stabilization scaling.
    alpha : {"simple", "improved"}
    mu_d : float
    r_mode : {"weighted", "one"}
    k_s, k_q, k_gs, k_gq : int
    L, q_s : int or None
        Quadrature knobs; ``None`` selects the defaults 2 k_q + 2 and k_s + 1.
    source : {"auto", "manufactured", "zero"}
        ``auto`` uses the manufactured source when the scene has an exact solution.
    """

    beta: float = 0.0
    xi_mode: str = "h"
    alpha: str = "simple"
    mu_d: float = 1.0
    r_mode: str = "weighted"
    k_s: int = 1
    k_q: int = 1
    k_gs: int = 1
    k_gq: int = 1
    L: object = None
    q_s: object = None
    source: str = "auto"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError("beta must lie in [0, 1]")
        if self.xi_mode not in ("h", "1/h", "zero"):
            raise ConfigurationError(f"unknown xi mode {self.xi_mode!r}")
        if self.alpha not in ("simple", "improved"):
            raise ConfigurationError(f"unknown alpha mode {self.alpha!r}")
        if self.r_mode not in ("weighted", "one"):
            raise ConfigurationError(f"unknown R mode {self.r_mode!r}")
        if self.source not in ("auto", "manufactured", "zero"):
            raise ConfigurationError(f"unknown source mode {self.source!r}")
        if min(self.k_s, self.k_q, self.k_gs, self.k_gq) < 1:
            raise ConfigurationError("all orders must be >= 1")
        if self.mu_d <= 0:
            raise ConfigurationError("mu_d must be positive")

    def xi(self, h):
        return {"h": h, "1/h": 1.0 / h, "zero": 0.0}[self.xi_mode]

    @property
    def L_eff(self):
        return 2 * self.k_q + 2 if self.L is None else int(self.L)

    @property
    def q_s_eff(self):
        return self.k_s + 1 if self.q_s is None else int(self.q_s)


@dataclass(frozen=True, eq=False)
class SlabSystem:
    """Sparse slab matrix (CSR) and right-hand side."""

    A: sp.csr_matrix
    b: np.ndarray
    parts: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.b)


def manufactured_source(scene, x, t, mu_d=1.0):
    """f = u_dot + u div_Gamma w - mu_d Laplace-Beltrami(u) from analytic data.

    The Laplace-Beltrami operator of the extension is evaluated as
    tr(P H_u) - kappa (n . grad u), kappa = tr(P H_phi) / |grad phi|.
    """
    if not scene.has_exact:
        raise UnsupportedSceneError(f"scene {scene.name!r} has no exact solution")
    x = np.atleast_2d(x)
    g = scene.grad_phi(x, t)
    gn = np.linalg.norm(g, axis=1)
    n = g / gn[:, None]
    P = np.eye(2) - n[:, :, None] * n[:, None, :]
    u = scene.u_exact(x, t)
    gu = scene.grad_u(x, t)
    w = scene.w(x, t)
    Gw = scene.grad_w(x, t)
    udot = scene.du_dt(x, t) + (w * gu).sum(axis=1)
    divw = np.einsum("nij,nji->n", P, Gw)
    kappa = np.einsum("nij,nji->n", P, scene.hess_phi(x, t)) / gn
    lap = np.einsum("nij,nji->n", P, scene.hess_u(x, t)) - kappa * (n * gu).sum(axis=1)
    return udot + u * divw - mu_d * lap


def eval_R(geo, w, r_mode="weighted"):
    """Boundary weight R = (1/alpha_h) w_S . nu_partial.

    With nu_partial = (V_h n_h, 1) / sqrt(1 + V_h^2) this is
    (V_h w . n_h + 1) / (alpha_h sqrt(1 + V_h^2)).
    """
    if r_mode == "one":
        return np.ones(len(geo.V))
    wn = (w * geo.n_h).sum(axis=1)
    return (geo.V * wn + 1.0) / (geo.alpha * np.sqrt(1.0 + geo.V**2))


def _basis_at(basis, mesh, q, t0, t1):
    """Basis values and undeformed physical space-time gradients at rule points."""
    dt = t1 - t0
    val, grad = basis(q.xhat, (q.t - t0) / dt)
    Binv = mesh.affine[2][q.elems]
    gx = np.einsum("nia,nab->nib", grad[:, :, :2], Binv)
    return val, np.concatenate([gx, grad[:, :, 2:] / dt], axis=2)


class _Scatter:
    """Accumulates element-local blocks grouped by owner into COO lists."""

    def __init__(self, dofmap):
        self.dofmap = dofmap
        self.rows, self.cols, self.vals = [], [], []

    def add(self, owner, local):
        if len(owner) == 0:
            return
        starts = np.r_[0, np.nonzero(np.diff(owner))[0] + 1]
        blocks = np.add.reduceat(local, starts, axis=0)
        dofs = self.dofmap.cell_dofs[owner[starts]]
        nb = dofs.shape[1]
        self.rows.append(np.repeat(dofs, nb, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, nb)).ravel())
        self.vals.append(blocks.ravel())

    def matrix(self):
        N = self.dofmap.N
        if not self.rows:
            return sp.csr_matrix((N, N))
        A = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=(N, N)
        )
        return A.tocsr()


def _scatter_vec(dofmap, owner, local, out):
    if len(owner) == 0:
        return
    np.add.at(out, dofmap.cell_dofs[owner].ravel(), local.ravel())


def _source_mode(params, scene):
    if params.source == "zero":
        return False
    if params.source == "manufactured":
        if not scene.has_exact:
            raise UnsupportedSceneError(f"scene {scene.name!r} has no exact solution")
        return True
    return scene.has_exact


def assemble_slab(params, scene, ls, topo, deform, dofmap, surf, prism, bottom, top, prev, alpha=None, collect=False):
    """Assemble the stabilized slab system.

    Parameters
    ----------
    params : MethodParams
    scene : AnalyticScene
    ls : DiscreteLevelSet
    topo : CutTopologySlab
    deform : SpaceTimeDeformation
    dofmap : DofMap
    surf : SurfaceQuadrature
        Space-time rule on Gamma_lin(t), t in I_n.
    prism : PrismQuadrature
    bottom, top : SurfaceQuadrature
        Rules on Gamma_lin(t_{n-1}) and Gamma_lin(t_n).
    prev : FEFunction or None
        Previous slab solution (or the initial interpolant); its values at
        the bottom points in reference coordinates equal
        u_prev o Theta^{n-1} o (Theta^n)^{-1} evaluated on Gamma_h^n(t_{n-1}).
    alpha : ImprovedAlpha or None
        Required for ``params.alpha == "improved"``.
    collect : bool
        Also return the individual contributions in ``parts``.

    Returns
    -------
    SlabSystem
    """
    basis = TensorBasis(params.k_s, params.k_q)
    mesh = ls.mesh
    t0, t1 = ls.t0, ls.t1
    beta, mu = params.beta, params.mu_d
    N = dofmap.N
    b = np.zeros(N)
    use_f = _source_mode(params, scene)
    if params.alpha == "improved" and alpha is None:
        raise ConfigurationError("improved alpha requires the projected field")
    alpha_arg = alpha if params.alpha == "improved" else None

    names = ("material", "reaction", "diffusion", "top", "bottom", "stab")
    acc = {k: _Scatter(dofmap) for k in names} if collect else None
    total = _Scatter(dofmap)

    def add(name, owner, local):
        total.add(owner, local)
        if collect:
            acc[name].add(owner, local)

    # surface integrals over S_h
    if len(surf):
        geo = map_points(deform, ls, surf.elems, surf.xhat, surf.t, alpha_arg)
        val, grad = _basis_at(basis, mesh, surf, t0, t1)
        gst = deformed_gradient(grad, geo)  # (n, nb, 3) in (y, t)
        w = scene.w(geo.y, geo.t)
        Gw = scene.grad_w(geo.y, geo.t)
        wS = np.column_stack([w, np.ones(len(w))])
        PwS = wS - (wS * geo.n_sh).sum(axis=1)[:, None] * geo.n_sh
        mat = np.einsum("nc,nic->ni", PwS, gst)
        nh = geo.n_h
        divw = np.einsum("nii->n", Gw) - np.einsum("ni,nij,nj->n", nh, Gw, nh)
        gy = gst[:, :, :2]
        gG = gy - np.einsum("nic,nc->ni", gy, nh)[:, :, None] * nh[:, None, :]
        W = surf.weight * geo.J_alpha
        # local[n, i, j]: test i, trial j
        loc_mat = (1.0 - beta) * val[:, :, None] * mat[:, None, :] - beta * mat[:, :, None] * val[:, None, :]
        add("material", surf.owner, W[:, None, None] * loc_mat)
        if beta < 1.0:
            add("reaction", surf.owner, ((1.0 - beta) * W * divw)[:, None, None] * val[:, :, None] * val[:, None, :])
        add("diffusion", surf.owner, (mu * W)[:, None, None] * np.einsum("nic,njc->nij", gG, gG))
        if use_f:
            f = manufactured_source(scene, geo.y, geo.t, mu)
            _scatter_vec(dofmap, surf.owner, (surf.weight * geo.meas * f)[:, None] * val, b)

    # slab-end terms
    if beta > 0.0 and len(top):
        geo = map_points(deform, ls, top.elems, top.xhat, top.t, alpha_arg)
        R = eval_R(geo, scene.w(geo.y, geo.t), params.r_mode)
        val, _ = _basis_at(basis, mesh, top, t0, t1)
        Wt = beta * top.weight * geo.meas * R
        add("top", top.owner, Wt[:, None, None] * val[:, :, None] * val[:, None, :])
    if len(bottom):
        geo = map_points(deform, ls, bottom.elems, bottom.xhat, bottom.t, alpha_arg)
        R = eval_R(geo, scene.w(geo.y, geo.t), params.r_mode)
        val, _ = _basis_at(basis, mesh, bottom, t0, t1)
        Wb = bottom.weight * geo.meas * R
        if beta < 1.0:
            add("bottom", bottom.owner, ((1.0 - beta) * Wb)[:, None, None] * val[:, :, None] * val[:, None, :])
        if prev is not None:
            up = transfer_values(prev, bottom)
            _scatter_vec(dofmap, bottom.owner, (Wb * up)[:, None] * val, b)

    # volume normal-derivative stabilization
    xi = params.xi(mesh.h)
    if xi > 0.0 and len(prism):
        geo = map_points(deform, ls, prism.elems, prism.xhat, prism.t)
        _, grad = _basis_at(basis, mesh, prism, t0, t1)
        gy = np.einsum("nba,nib->nia", geo.Ainv, grad[:, :, :2])
        dn = np.einsum("nic,nc->ni", gy, geo.n_h)
        Ws = xi * prism.weight * np.abs(geo.detA)
        add("stab", prism.owner, Ws[:, None, None] * dn[:, :, None] * dn[:, None, :])

    A = total.matrix()
    parts = {k: v.matrix() for k, v in acc.items()} if collect else {}
    return SlabSystem(A, b, parts)


def transfer_values(prev, rule):
    """Values of ``prev`` at the reference points of ``rule``.

    Points whose triangle is not active for ``prev`` use the polynomial of the
    nearest active triangle of ``prev`` (logged).
    """
    v, _ = prev.evaluate(rule.elems, rule.xhat, rule.t, strict=False)
    miss = np.isnan(v)
    if np.any(miss):
        log.warning("transfer: %d points outside the previous active set", int(miss.sum()))
        mesh = prev.mesh
        cent = mesh.vertices[mesh.triangles[prev.dofmap.elems]].mean(axis=1)
        x = rule.x[miss]
        near = prev.dofmap.elems[np.argmin(((x[:, None, :] - cent[None]) ** 2).sum(-1), axis=1)]
        v[miss], _ = prev.evaluate(near, mesh.to_reference(near, x), rule.t[miss])
    return v


def parametric_initial_condition(scene, deform, dofmap, mesh, t0=0.0):
    """Interpolant of u0 o Theta_{h,t0} at the spatial Lagrange nodes.

    ``dofmap`` should have k_q = 0; the result is constant in time.
    """
    u0 = lambda y, t: scene.u0(y)
    fn = interpolate_fe(u0, dofmap, mesh, t0, t0 + 1.0, deform=_AtTime(deform, t0))
    return fn


class _AtTime:
    """Freeze the time argument of a deformation."""

    def __init__(self, deform, t):
        self.deform, self.t = deform, t

    def spatial(self, elems, xhat, t):
        return self.deform.spatial(elems, xhat, np.full(len(elems), self.t))
