"""Tensor-product space-time finite elements on the active prisms of a slab."""

from dataclasses import dataclass

import numpy as np

from .exceptions import PointLocationError
from .mesh import reference_lagrange
from .quadrature import temporal_basis


class TensorBasis:
    """Products of degree-``k_s`` triangle Lagrange and degree-``k_q`` temporal Lagrange functions.

    The local index of the product of spatial function ``j`` and temporal
    function ``m`` is ``j * (k_q + 1) + m``.
    """

    def __init__(self, k_s, k_q):
        if k_s < 1 or k_q < 0:
            raise ValueError("need k_s >= 1 and k_q >= 0")
        self.k_s, self.k_q = k_s, k_q
        self.space = reference_lagrange(k_s)
        self.time = temporal_basis(k_q)
        self.n_space = self.space.size
        self.n_time = k_q + 1

    @property
    def size(self):
        return self.n_space * self.n_time

    def __call__(self, xhat, s):
        """Values and reference gradients at reference points ``(xhat, s)``.

        Parameters
        ----------
        xhat : ndarray (n, 2)
        s : ndarray (n,)
            Normalised time in [0, 1].

        Returns
        -------
        val : (n, nb)
        grad : (n, nb, 3)
            Derivatives with respect to (xhat_1, xhat_2, s).
        """
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        s = np.broadcast_to(np.asarray(s, dtype=float), (len(xhat),))
        N = self.space.values(xhat)
        dN = self.space.gradients(xhat)
        T = self.time(s)
        dT = self.time.deriv(s)
        n = len(xhat)
        val = (N[:, :, None] * T[:, None, :]).reshape(n, -1)
        gx = (dN[:, :, None, :] * T[:, None, :, None]).reshape(n, -1, 2)
        gt = (N[:, :, None] * dT[:, None, :]).reshape(n, -1, 1)
        return val, np.concatenate([gx, gt], axis=2)


def eval_basis(basis, elem, xhat, s, mesh=None, dt=1.0):
    """Basis values and space-time gradients on one element.

    With ``mesh`` given, gradients are physical (undeformed) and the time
    derivative is divided by ``dt``; otherwise reference gradients are
    returned.
    """
    val, grad = basis(xhat, s)
    if mesh is None:
        return val, grad
    Binv = mesh.affine[2][np.broadcast_to(elem, (len(val),))]
    gx = np.einsum("nia,nab->nib", grad[:, :, :2], Binv)
    return val, np.concatenate([gx, grad[:, :, 2:] / dt], axis=2)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Numbering of the space-time DOFs on the active prisms of one slab.

    Spatial nodes shared by active triangles share DOFs; temporal DOFs are
    local to the slab.
    """

    n: int
    k_s: int
    k_q: int
    elems: np.ndarray
    nodes: np.ndarray
    cell_dofs: np.ndarray

    @property
    def N(self):
        return len(self.nodes) * (self.k_q + 1)

    def __len__(self):
        return self.N

    def local_index(self, elems, strict=True):
        elems = np.asarray(elems)
        if len(self.elems) == 0:
            if strict:
                raise PointLocationError("empty DOF map")
            return np.full(elems.shape, -1)
        pos = np.minimum(np.searchsorted(self.elems, elems), len(self.elems) - 1)
        hit = self.elems[pos] == elems
        if strict and not np.all(hit):
            raise PointLocationError("point is not in an active element")
        return np.where(hit, pos, -1)


def build_dofmap(topo, mesh, k_s, k_q):
    """DOFs of V_h^{k_s,k_q} restricted to the active prisms of ``topo``."""
    elems = np.asarray(topo.active)
    _, cell_nodes = mesh.lagrange_nodes(k_s)
    nt = k_q + 1
    if len(elems) == 0:
        nloc = reference_lagrange(k_s).size
        return DofMap(topo.n, k_s, k_q, elems, np.empty(0, dtype=np.int64), np.empty((0, nloc * nt), dtype=np.int64))
    local_nodes = cell_nodes[elems]
    nodes, inv = np.unique(local_nodes, return_inverse=True)
    inv = inv.reshape(local_nodes.shape)
    cell_dofs = (inv[:, :, None] * nt + np.arange(nt)).reshape(len(elems), -1)
    return DofMap(topo.n, k_s, k_q, elems, nodes, cell_dofs)


@dataclass(frozen=True, eq=False)
class FEFunction:
    """Coefficient vector over a :class:`DofMap` on the slab [t0, t1]."""

    dofmap: DofMap
    coeffs: np.ndarray
    t0: float
    t1: float
    mesh: object

    def __post_init__(self):
        if len(self.coeffs) != self.dofmap.N:
            raise ValueError("coefficient vector does not match the DOF map")

    @property
    def basis(self):
        return TensorBasis(self.dofmap.k_s, self.dofmap.k_q)

    def local_coeffs(self, elems, strict=True):
        idx = self.dofmap.local_index(elems, strict=strict)
        return self.coeffs[self.dofmap.cell_dofs[idx]], idx

    def evaluate(self, elems, xhat, t, strict=True):
        """Value and undeformed space-time gradient (d/dx, d/dy, d/dt)."""
        elems = np.asarray(elems)
        c, idx = self.local_coeffs(elems, strict=strict)
        dt = self.t1 - self.t0
        s = (np.broadcast_to(np.asarray(t, dtype=float), (len(elems),)) - self.t0) / dt
        val, grad = eval_basis(self.basis, elems, xhat, s, self.mesh, dt)
        v = (val * c).sum(axis=1)
        g = np.einsum("ni,nic->nc", c, grad)
        if not strict:
            miss = idx < 0
            v[miss] = np.nan
            g[miss] = np.nan
        return v, g


def deformed_gradient(grad, geo):
    """Push an undeformed space-time gradient forward through Theta.

    ``grad`` has shape (n, ..., 3); returns the gradient in (y, t) with the
    inverse-transpose of the space-time Jacobian.
    """
    gx = grad[..., :2]
    Ainv = geo.Ainv
    extra = grad.ndim - 2
    if extra:
        gy = np.einsum("nba,n...b->n...a", Ainv, gx)
        a = geo.a.reshape((len(geo.a),) + (1,) * extra + (2,))
    else:
        gy = np.einsum("nba,nb->na", Ainv, gx)
        a = geo.a
    gt = grad[..., 2] - (gy * a).sum(axis=-1)
    return np.concatenate([gy, gt[..., None]], axis=-1)


def eval_fe(fn, elems, xhat, t, geo=None):
    """Evaluate an FE function in reference mode.

    Parameters
    ----------
    fn : FEFunction
    elems, xhat, t : reference points
    geo : MappedPointData, optional
        When given, the returned gradient is the deformed space-time gradient
        at Theta(x, t); otherwise the undeformed one.

    Returns
    -------
    value : (n,)
    grad : (n, 3)
    """
    v, g = fn.evaluate(elems, xhat, t)
    if geo is not None:
        g = deformed_gradient(g, geo)
    return v, g


def eval_fe_at(fn, deform, y, t, seed=None):
    """Evaluate at a physical point ``y`` on the deformed geometry."""
    from .deform import invert_map

    e, x = invert_map(deform, y, t, seed=seed)
    xhat = fn.mesh.to_reference([e], x[None, :])
    return fn.evaluate([e], xhat, t)


def interpolate_fe(func, dofmap, mesh, t0, t1, deform=None):
    """Nodal interpolant of ``func(x, t)`` (optionally composed with Theta)."""
    coords, cell_nodes = mesh.lagrange_nodes(dofmap.k_s)
    tn = t0 + (t1 - t0) * temporal_basis(dofmap.k_q).nodes
    nt = dofmap.k_q + 1
    c = np.empty((len(dofmap.nodes), nt))
    if deform is None:
        X = coords[dofmap.nodes]
        for m, tm in enumerate(tn):
            c[:, m] = func(X, tm)
    else:
        e, xh = node_owners(dofmap, mesh)
        for m, tm in enumerate(tn):
            y, _, _ = deform.spatial(e, xh, np.full(len(e), tm))
            c[:, m] = func(y, tm)
    return FEFunction(dofmap, c.ravel(), t0, t1, mesh)


def node_owners(dofmap, mesh):
    """One (element, reference point) pair per spatial DOF node."""
    ref = reference_lagrange(dofmap.k_s)
    nt = dofmap.k_q + 1
    node_idx = dofmap.cell_dofs[:, ::nt] // nt  # compressed node ids
    flat = node_idx.ravel()
    first = np.full(len(dofmap.nodes), -1)
    pos = np.arange(len(flat))[::-1]
    first[flat[::-1]] = pos
    e = first // ref.size
    j = first % ref.size
    return dofmap.elems[e], ref.nodes[j]
