"""Space-time nodal interpolation of the level set and derived geometric scalars."""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import DegenerateGradientError
from .mesh import locate_points, reference_lagrange
from .quadrature import temporal_basis

# gradients below this norm are treated as vanishing
GRAD_TOL = 1e-14
# exact zeros of phi_hat at vertices are replaced by +ZERO_SHIFT * scale
ZERO_SHIFT = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteLevelSet:
    """Level-set interpolant phi_h on one slab.

    ``values[i, m]`` is phi at the degree-``k_gs`` Lagrange node ``i`` and the
    temporal node ``tau_m`` (Gauss-Lobatto points of the slab). The first
    ``mesh.n_vertices`` rows are the vertex values, i.e. the coefficients of
    the spatially piecewise linear restriction phi_hat. Exact zeros among
    those are replaced by ``+ZERO_SHIFT * scale`` so that no vertex lies on
    the discrete surface at a temporal node.
    """

    mesh: object
    n: int
    t0: float
    t1: float
    k_gs: int
    k_gq: int
    values: np.ndarray

    @property
    def dt(self):
        return self.t1 - self.t0

    @property
    def tau(self):
        return self.t0 + self.dt * self.time_basis.nodes

    @property
    def time_basis(self):
        return temporal_basis(self.k_gq)

    @cached_property
    def scale(self):
        """Typical magnitude of phi_hat (median of nonzero vertex values).

        The median rather than the maximum: level sets with point
        singularities would otherwise inflate the tie-break shift.
        """
        v = np.abs(self.values[: self.mesh.n_vertices])
        v = v[v > 0]
        return float(np.median(v)) if len(v) else 1.0

    @cached_property
    def vertex_values(self):
        """Coefficients of phi_hat, shape (n_vertices, k_gq + 1)."""
        v = self.values[: self.mesh.n_vertices]
        return np.where(v == 0.0, ZERO_SHIFT * self.scale, v)

    def s(self, t):
        return (np.asarray(t, dtype=float) - self.t0) / self.dt

    # phi_hat ----------------------------------------------------------
    def vertex_values_at(self, t, vertices=None):
        """phi_hat at mesh vertices at time(s) ``t``.

        With ``vertices`` of shape (n, 3) and ``t`` of shape (n,), returns (n, 3).
        """
        T = self.time_basis(self.s(t))
        vv = self.vertex_values if vertices is None else self.vertex_values[vertices]
        if vertices is None:
            return vv @ T.T if np.ndim(t) else vv @ T
        return np.einsum("nvm,nm->nv", vv, T)

    def vertex_dt_at(self, t, vertices):
        dT = self.time_basis.deriv(self.s(t)) / self.dt
        return np.einsum("nvm,nm->nv", self.vertex_values[vertices], dT)

    def phi_hat(self, elems, xhat, t):
        """Value, spatial gradient and time derivative of phi_hat at reference points."""
        tri = self.mesh.triangles[elems]
        v = self.vertex_values_at(t, tri)
        vt = self.vertex_dt_at(t, tri)
        lam = np.column_stack([1.0 - xhat[:, 0] - xhat[:, 1], xhat[:, 0], xhat[:, 1]])
        G = self.mesh.barycentric_gradients[elems]
        return (lam * v).sum(-1), np.einsum("nv,nvi->ni", v, G), (lam * vt).sum(-1)

    def grad_phi_hat(self, elems, t):
        """Spatial gradient of phi_hat (constant on each triangle), shape (n, 2)."""
        v = self.vertex_values_at(t, self.mesh.triangles[elems])
        return np.einsum("nv,nvi->ni", v, self.mesh.barycentric_gradients[elems])

    # phi_h ------------------------------------------------------------
    def element_values(self, elems):
        """Nodal values on the given triangles, shape (n, n_local, k_gq + 1)."""
        _, cell_nodes = self.mesh.lagrange_nodes(self.k_gs)
        return self.values[cell_nodes[elems]]

    def phi_h(self, elems, xhat, t, coeffs=None):
        """Value, physical gradient and time derivative of the element polynomial.

        ``xhat`` may lie outside the reference triangle (polynomial extension).
        """
        ref = reference_lagrange(self.k_gs)
        c = self.element_values(elems) if coeffs is None else coeffs
        s = self.s(t)
        T = self.time_basis(s)
        dT = self.time_basis.deriv(s) / self.dt
        cs = np.einsum("njm,nm->nj", c, T)
        ct = np.einsum("njm,nm->nj", c, dT)
        N = ref.values(xhat)
        dN = ref.gradients(xhat)
        Binv = self.mesh.affine[2][elems]
        grad = np.einsum("nj,nja,nai->ni", cs, dN, Binv)
        return (N * cs).sum(-1), grad, (N * ct).sum(-1)


def interpolate_levelset(scene, mesh, grid, n, k_gs, k_gq):
    """Nodal interpolation of ``scene.phi`` on slab ``n`` (1-based).

    Values are taken at the degree-``k_gs`` Lagrange nodes and at the
    Gauss-Lobatto nodes of degree ``k_gq`` in time, so coefficients at the
    shared slab end points coincide between neighbouring slabs.
    """
    if k_gs < 1 or k_gq < 1:
        raise ValueError("geometry orders must be >= 1")
    t0, t1 = grid.slab(n)
    coords, _ = mesh.lagrange_nodes(k_gs)
    tau = t0 + (t1 - t0) * temporal_basis(k_gq).nodes
    tau[0], tau[-1] = t0, t1
    values = np.column_stack([scene.phi(coords, tm) for tm in tau])
    return DiscreteLevelSet(mesh, n, t0, t1, k_gs, k_gq, values)


def eval_normals_lin(ls, elems, xhat, t):
    """Spatial and space-time unit normals of phi_hat.

    Parameters
    ----------
    ls : DiscreteLevelSet
    elems : int array (n,)
    xhat : ndarray (n, 2)
        Reference coordinates within ``elems``.
    t : float or ndarray (n,)

    Returns
    -------
    n_lin : ndarray (n, 2)
    n_slin : ndarray (n, 3)
        Ordered (x, y, t).

    Raises
    ------
    DegenerateGradientError
        If the spatial gradient of phi_hat vanishes.
    """
    elems = np.atleast_1d(elems)
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), elems.shape)
    _, g, gt = ls.phi_hat(elems, xhat, t)
    norm = np.linalg.norm(g, axis=-1)
    if np.any(norm <= GRAD_TOL):
        raise DegenerateGradientError("grad(phi_hat) vanishes")
    g3 = np.column_stack([g, gt])
    return g / norm[:, None], g3 / np.linalg.norm(g3, axis=-1)[:, None]


def eval_Vh(ls, deform, elems, xhat, t):
    """Discrete normal velocity V_h at Theta(x, t), via the chain rule."""
    from .deform import map_points

    return map_points(deform, ls, elems, xhat, t).V


def eval_alpha(ls, deform, choice, elems, xhat, t):
    """alpha_h at Theta(x, t) for the given :class:`AlphaChoice`."""
    from .deform import map_points

    return map_points(deform, ls, elems, xhat, t, alpha=choice).alpha


@dataclass(frozen=True)
class AlphaChoice:
    """Variant of the measure factor alpha_h.

    ``"simple"`` uses sqrt(1 + V_h^2); ``"improved"`` uses the nodally
    averaged interpolant of sqrt(1 + V~_h^2) built from a level set
    interpolated one order higher.
    """

    variant: str = "simple"
    field: Optional["ImprovedAlpha"] = None

    def __post_init__(self):
        if self.variant not in ("simple", "improved"):
            raise ValueError(f"unknown alpha variant {self.variant!r}")


@dataclass(frozen=True, eq=False)
class ImprovedAlpha:
    """Continuous FE field alpha_h on the active triangles of one slab.

    ``coeffs[e, j, m]`` is the averaged value at local Lagrange node ``j`` of
    active triangle ``elems[e]`` (sorted) and temporal node ``m``.
    """

    mesh: object
    elems: np.ndarray
    t0: float
    t1: float
    k_gs: int
    k_gq: int
    coeffs: np.ndarray

    def __call__(self, seeds, y, t):
        """Evaluate at physical points ``y``.

        ``seeds`` are triangles close to ``y`` (the undeformed element of the
        preimage). Points that fall outside the active region use the
        polynomial of their seed triangle.
        """
        seeds = np.asarray(seeds)
        found, _ = locate_points(self.mesh, seeds, y)
        pos = np.searchsorted(self.elems, found)
        pos = np.minimum(pos, len(self.elems) - 1)
        ok = (found >= 0) & (self.elems[pos] == found)
        use = np.where(ok, found, seeds)
        idx = np.searchsorted(self.elems, use)
        xhat = self.mesh.to_reference(use, y)
        N = reference_lagrange(self.k_gs).values(xhat)
        s = (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0)
        T = np.broadcast_to(temporal_basis(self.k_gq)(s), (len(use), self.k_gq + 1))
        return np.einsum("nj,njm,nm->n", N, self.coeffs[idx], T)


def oswald_average(cell_nodes, local_values, n_nodes):
    """Average element-wise nodal values over all elements sharing a node.

    Parameters
    ----------
    cell_nodes : (n_elems, n_local) global node ids
    local_values : (n_elems, n_local, ...) values
    n_nodes : int

    Returns
    -------
    ndarray (n_elems, n_local, ...)
        The averaged values scattered back to the elements.
    """
    flat = cell_nodes.ravel()
    tail = local_values.shape[2:]
    vals = local_values.reshape((-1,) + tail)
    acc = np.zeros((n_nodes,) + tail)
    np.add.at(acc, flat, vals)
    cnt = np.bincount(flat, minlength=n_nodes).astype(float)
    cnt = cnt.reshape((-1,) + (1,) * len(tail))
    avg = acc / np.maximum(cnt, 1.0)
    return avg[cell_nodes]


def build_improved_alpha(scene, mesh, grid, n, elems, k_gs, k_gq):
    """alpha_h = P_hat(sqrt(1 + V~^2)) on the active triangles ``elems`` of slab ``n``.

    V~ = -d_t phi~ / |grad phi~| with phi~ the nodal interpolant of order
    (k_gs + 1, k_gq + 1).
    """
    fine = interpolate_levelset(scene, mesh, grid, n, k_gs + 1, k_gq + 1)
    ref = reference_lagrange(k_gs)
    tau = fine.t0 + fine.dt * temporal_basis(k_gq).nodes
    nloc, nt = ref.size, len(tau)
    ne = len(elems)
    xhat = np.tile(ref.nodes, (ne, 1))
    e_rep = np.repeat(elems, nloc)
    coeffs_fine = fine.element_values(e_rep)
    local = np.empty((ne, nloc, nt))
    for m, tm in enumerate(tau):
        _, g, pt = fine.phi_h(e_rep, xhat, np.full(len(e_rep), tm), coeffs=coeffs_fine)
        vt = -pt / np.maximum(np.linalg.norm(g, axis=-1), GRAD_TOL)
        local[:, :, m] = np.sqrt(1.0 + vt**2).reshape(ne, nloc)
    coords, cell_nodes = mesh.lagrange_nodes(k_gs)
    coeffs = oswald_average(cell_nodes[elems], local, len(coords))
    t0, t1 = grid.slab(n)
    return ImprovedAlpha(mesh, np.asarray(elems), t0, t1, k_gs, k_gq, coeffs)


def oswald_project(mesh, elems, k, local_values):
    """Oswald projection of element-wise nodal values (all temporal nodes at once)."""
    coords, cell_nodes = mesh.lagrange_nodes(k)
    return oswald_average(cell_nodes[elems], local_values, len(coords))
