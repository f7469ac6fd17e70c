"""Parametric space-time mesh deformation and the geometry it induces.

On each slab the spatial deformation is a continuous FE displacement of
degree k_gs on the active triangles, stored at the temporal nodes and
blended in time with the Lagrange basis of degree k_gq::

    Theta(x, t) = (x + sum_m X_m(t) d_m(x), t)

For k_gs = 1 the displacement vanishes identically.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DeformationError, InversionError, PointLocationError
from .levelset import GRAD_TOL, oswald_project
from .mesh import reference_lagrange
from .quadrature import temporal_basis

log = logging.getLogger(__name__)

NEWTON_ITERS = 12
NEWTON_TOL = 1e-14
INVERT_MAX_ITERS = 50


@dataclass(frozen=True, eq=False)
class SpaceTimeDeformation:
    """Theta_h^n on the active prisms of one slab.

    ``disp[e, j, m]`` is the displacement (2-vector) at local Lagrange node
    ``j`` of active triangle ``elems[e]`` at temporal node ``tau_m``.
    """

    mesh: object
    n: int
    t0: float
    t1: float
    k_gs: int
    k_gq: int
    elems: np.ndarray
    disp: np.ndarray
    identity: bool = False

    @property
    def tau(self):
        return self.t0 + (self.t1 - self.t0) * temporal_basis(self.k_gq).nodes

    def local_index(self, elems):
        elems = np.asarray(elems)
        if len(self.elems) == 0:
            raise PointLocationError("deformation has no active elements")
        pos = np.minimum(np.searchsorted(self.elems, elems), len(self.elems) - 1)
        if np.any(self.elems[pos] != elems):
            raise PointLocationError("point lies outside the deformed region")
        return pos

    def spatial(self, elems, xhat, t):
        """Image, spatial Jacobian and time derivative of Theta_s.

        Returns
        -------
        y : (n, 2)
        A : (n, 2, 2)
            D Theta_s (physical).
        a : (n, 2)
            d/dt Theta_s.
        """
        elems = np.asarray(elems)
        xhat = np.asarray(xhat, dtype=float)
        n = len(elems)
        x = self.mesh.to_physical(elems, xhat)
        if self.identity:
            return x, np.broadcast_to(np.eye(2), (n, 2, 2)).copy(), np.zeros((n, 2))
        idx = self.local_index(elems)
        ref = reference_lagrange(self.k_gs)
        tb = temporal_basis(self.k_gq)
        dt = self.t1 - self.t0
        s = (np.broadcast_to(np.asarray(t, dtype=float), (n,)) - self.t0) / dt
        T, dT = tb(s), tb.deriv(s) / dt
        d = self.disp[idx]  # (n, nloc, M, 2)
        d_t = np.einsum("njmc,nm->njc", d, T)
        d_dt = np.einsum("njmc,nm->njc", d, dT)
        N = ref.values(xhat)
        dN = ref.gradients(xhat)
        Binv = self.mesh.affine[2][elems]
        gradN = np.einsum("nja,nab->njb", dN, Binv)
        y = x + np.einsum("nj,njc->nc", N, d_t)
        A = np.eye(2) + np.einsum("njc,njb->ncb", d_t, gradN)
        a = np.einsum("nj,njc->nc", N, d_dt)
        return y, A, a


def identity_deformation(mesh, topo, k_gs=1, k_gq=1):
    nloc = reference_lagrange(k_gs).size
    disp = np.zeros((topo.n_active, nloc, k_gq + 1, 2))
    return SpaceTimeDeformation(mesh, topo.n, topo.t0, topo.t1, k_gs, k_gq, np.asarray(topo.active), disp, True)


def _lift(ls, elems, xhat, tau, h):
    """Level-value matching search along the phi_hat normal.

    Solves phi_h^K(p + d G, tau) = phi_hat(p, tau) for d, with G the unit
    gradient of phi_hat on K and phi_h^K the element polynomial of K.
    """
    n = len(elems)
    tt = np.full(n, tau)
    target, g, _ = ls.phi_hat(elems, xhat, tt)
    gn = np.linalg.norm(g, axis=1)
    ok = gn > GRAD_TOL
    G = np.where(ok[:, None], g / np.where(ok, gn, 1.0)[:, None], 0.0)
    p = ls.mesh.to_physical(elems, xhat)
    coeffs = ls.element_values(elems)
    mesh = ls.mesh

    def f(d):
        z = p + d[:, None] * G
        val, grad, _ = ls.phi_h(elems, mesh.to_reference(elems, z), tt, coeffs=coeffs)
        return val - target, (grad * G).sum(axis=1)

    dmax = 0.5 * h
    d = np.zeros(n)
    for _ in range(NEWTON_ITERS):
        r, dr = f(d)
        step = np.where(np.abs(dr) > GRAD_TOL, r / np.where(np.abs(dr) > GRAD_TOL, dr, 1.0), 0.0)
        d = np.clip(d - step, -dmax, dmax)
    r, _ = f(d)
    bad = ok & (np.abs(r) > 1e-10 * max(1.0, float(np.abs(target).max(initial=0.0))))
    if np.any(bad):
        d[bad] = _bisect(f, bad, dmax)
    d[~ok] = 0.0
    return d[:, None] * G


def _bisect(f, bad, dmax):
    """Bisection on [-dmax, dmax] for the rows ``bad``; zero where not bracketed."""
    idx = np.nonzero(bad)[0]
    n = len(bad)

    def fb(d_sub):
        d = np.zeros(n)
        d[idx] = d_sub
        return f(d)[0][idx]

    lo = np.full(len(idx), -dmax)
    hi = np.full(len(idx), dmax)
    flo, fhi = fb(lo), fb(hi)
    bracket = np.sign(flo) != np.sign(fhi)
    if np.any(~bracket):
        log.warning("deformation lift: %d nodes without a bracketed root, left undeformed", int((~bracket).sum()))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = fb(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return np.where(bracket, 0.5 * (lo + hi), 0.0)


def build_deformation(ls, topo, phi_tilde=None, strict=False):
    """Construct Theta_h^n on the active prisms of ``topo``.

    Parameters
    ----------
    ls : DiscreteLevelSet
        Provides phi_hat (search direction and target value).
    topo : CutTopologySlab
    phi_tilde : DiscreteLevelSet, optional
        Higher-order level set whose element polynomials are matched;
        defaults to ``ls`` itself.
    strict : bool
        Raise :class:`DeformationError` on element inversion instead of
        falling back to the identity on the offending triangle.
    """
    k_gs, k_gq = ls.k_gs, ls.k_gq
    mesh = ls.mesh
    if k_gs == 1 or topo.n_active == 0:
        return identity_deformation(mesh, topo, k_gs, k_gq)
    field = ls if phi_tilde is None else phi_tilde
    ref = reference_lagrange(k_gs)
    elems = np.asarray(topo.active)
    ne, nloc = len(elems), ref.size
    e_rep = np.repeat(elems, nloc)
    xhat = np.tile(ref.nodes, (ne, 1))
    h = mesh.h
    local = np.empty((ne, nloc, k_gq + 1, 2))
    for m, tau in enumerate(ls.tau):
        lift = _lift(_Pair(ls, field), e_rep, xhat, tau, h)
        local[:, :, m, :] = lift.reshape(ne, nloc, 2)
    disp = oswald_project(mesh, elems, k_gs, local)
    deform = SpaceTimeDeformation(mesh, ls.n, ls.t0, ls.t1, k_gs, k_gq, elems, disp)
    bad = _inverted(deform)
    if np.any(bad):
        if strict:
            raise DeformationError(f"slab {ls.n}: {int(bad.sum())} inverted elements")
        log.warning("slab %d: %d inverted elements reset to identity", ls.n, int(bad.sum()))
        disp = disp.copy()
        disp[bad] = 0.0
        deform = SpaceTimeDeformation(mesh, ls.n, ls.t0, ls.t1, k_gs, k_gq, elems, disp)
    return deform


class _Pair:
    """phi_hat from one level set, element polynomials from another."""

    def __init__(self, lin, high):
        self.lin, self.high, self.mesh = lin, high, lin.mesh

    def phi_hat(self, elems, xhat, t):
        return self.lin.phi_hat(elems, xhat, t)

    def element_values(self, elems):
        return self.high.element_values(elems)

    def phi_h(self, elems, xhat, t, coeffs=None):
        return self.high.phi_h(elems, xhat, t, coeffs=coeffs)


def _inverted(deform):
    """Active triangles whose Jacobian determinant is not positive at some sample."""
    ref = reference_lagrange(deform.k_gs)
    samples = np.vstack([ref.nodes, [[1.0 / 3.0, 1.0 / 3.0]]])
    ne, ns = len(deform.elems), len(samples)
    e_rep = np.repeat(deform.elems, ns)
    xh = np.tile(samples, (ne, 1))
    bad = np.zeros(ne, dtype=bool)
    for tau in deform.tau:
        _, A, _ = deform.spatial(e_rep, xh, np.full(len(e_rep), tau))
        bad |= (np.linalg.det(A) <= 0.0).reshape(ne, ns).any(axis=1)
    return bad


@dataclass(frozen=True, eq=False)
class MappedPointData:
    """Geometry at Theta(x, t) for a batch of reference points (x, t).

    All unit vectors are exact to rounding; ``meas`` converts arclength on
    Gamma_lin into arclength on Gamma_h, and ``J_alpha`` additionally
    includes sqrt(1 + V_h^2) / alpha_h.
    """

    elems: np.ndarray
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    A: np.ndarray
    Ainv: np.ndarray
    a: np.ndarray
    detA: np.ndarray
    n_lin: np.ndarray
    n_slin: np.ndarray
    n_h: np.ndarray
    n_sh: np.ndarray
    V: np.ndarray
    meas: np.ndarray
    alpha: np.ndarray
    J_alpha: np.ndarray
    degenerate: np.ndarray

    @property
    def D(self):
        """Space-time Jacobian D_(x,t) Theta, shape (n, 3, 3)."""
        n = len(self.t)
        D = np.zeros((n, 3, 3))
        D[:, :2, :2] = self.A
        D[:, :2, 2] = self.a
        D[:, 2, 2] = 1.0
        return D

    @property
    def image(self):
        return np.column_stack([self.y, self.t])


def _unit(v):
    nrm = np.linalg.norm(v, axis=-1)
    ok = nrm > GRAD_TOL
    return np.where(ok[..., None], v / np.where(ok, nrm, 1.0)[..., None], 0.0), nrm, ok


def map_points(deform, ls, elems, xhat, t, alpha=None):
    """Evaluate Theta and the induced discrete geometry.

    Parameters
    ----------
    deform : SpaceTimeDeformation
    ls : DiscreteLevelSet
    elems : int array (n,)
    xhat : ndarray (n, 2)
    t : float or ndarray (n,)
    alpha : None, AlphaChoice or callable, optional
        ``None`` or the simple variant gives alpha_h = sqrt(1 + V_h^2). A
        callable ``alpha(seeds, y, t)`` (e.g. an ImprovedAlpha field) is
        evaluated at the image points.

    Returns
    -------
    MappedPointData
    """
    elems = np.atleast_1d(np.asarray(elems))
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    n = len(elems)
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()
    y, A, a = deform.spatial(elems, xhat, t)
    detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    if np.any(detA == 0.0):
        raise DeformationError("singular deformation Jacobian")
    Ainv = np.empty_like(A)
    Ainv[:, 0, 0], Ainv[:, 1, 1] = A[:, 1, 1] / detA, A[:, 0, 0] / detA
    Ainv[:, 0, 1], Ainv[:, 1, 0] = -A[:, 0, 1] / detA, -A[:, 1, 0] / detA
    _, g, gt = ls.phi_hat(elems, xhat, t)
    n_lin, _, ok = _unit(g)
    n_slin, _, _ = _unit(np.column_stack([g, gt]))
    # gradient and time derivative of phi_hat o Theta^{-1} by the chain rule
    gy = np.einsum("nba,nb->na", Ainv, g)
    psi_t = gt - (gy * a).sum(axis=1)
    n_h, gyn, ok_y = _unit(gy)
    ok &= ok_y
    V = np.where(ok, -psi_t / np.where(ok, gyn, 1.0), 0.0)
    n_sh, _, _ = _unit(np.column_stack([gy, psi_t]))
    meas = np.abs(detA) * np.linalg.norm(np.einsum("nba,nb->na", Ainv, n_lin), axis=1)
    sq = np.sqrt(1.0 + V**2)
    if alpha is None or getattr(alpha, "variant", None) == "simple":
        al = sq
    else:
        fn = getattr(alpha, "field", alpha)
        if fn is None:
            raise ValueError("improved alpha requires a field")
        al = fn(elems, y, t)
    return MappedPointData(
        elems=elems,
        x=deform.mesh.to_physical(elems, xhat),
        t=t,
        y=y,
        A=A,
        Ainv=Ainv,
        a=a,
        detA=detA,
        n_lin=n_lin,
        n_slin=n_slin,
        n_h=n_h,
        n_sh=n_sh,
        V=V,
        meas=meas,
        alpha=al,
        J_alpha=meas * sq / al,
        degenerate=~ok,
    )


def map_point(deform, ls, elem, xhat, t, alpha=None):
    """Single-point convenience wrapper around :func:`map_points`."""
    return map_points(deform, ls, [elem], np.reshape(xhat, (1, 2)), t, alpha)


def invert_map(deform, y, t, seed=None, tol=None):
    """Reference point x with Theta_s(x, t) = y.

    Newton iteration inside a candidate active triangle; when the iterate
    leaves the triangle the search moves to the neighbour across the
    violated edge. At most ``INVERT_MAX_ITERS`` iterations in total.

    Returns
    -------
    elem : int
    x : ndarray (2,)

    Raises
    ------
    InversionError
    """
    mesh = deform.mesh
    y = np.asarray(y, dtype=float).reshape(2)
    tol = 1e-12 * mesh.h if tol is None else tol
    if len(deform.elems) == 0:
        raise InversionError("empty deformation")
    if seed is None:
        cent = mesh.vertices[mesh.triangles[deform.elems]].mean(axis=1)
        seed = int(deform.elems[np.argmin(((cent - y) ** 2).sum(axis=1))])
    e = int(seed)
    xh = np.array([1.0 / 3.0, 1.0 / 3.0])
    visited = set()
    it = 0
    while it < INVERT_MAX_ITERS:
        try:
            deform.local_index([e])
        except PointLocationError:
            raise InversionError(f"point {y} is outside the deformed region") from None
        for _ in range(INVERT_MAX_ITERS - it):
            it += 1
            z, A, _ = deform.spatial([e], xh[None, :], t)
            r = z[0] - y
            if np.linalg.norm(r) <= tol:
                break
            B = mesh.affine[0][e]
            # d theta / d xhat = A B
            xh = xh - np.linalg.solve(A[0] @ B, r)
        lam = np.array([1.0 - xh.sum(), xh[0], xh[1]])
        worst = int(lam.argmin())
        z, _, _ = deform.spatial([e], xh[None, :], t)
        if lam[worst] >= -1e-10 and np.linalg.norm(z[0] - y) <= tol:
            return e, mesh.to_physical([e], xh[None, :])[0]
        visited.add(e)
        nxt = int(mesh.neighbors[e, (worst + 1) % 3])
        if nxt < 0 or nxt in visited:
            break
        # restart from the physical guess in the neighbour
        xh = mesh.to_reference([nxt], mesh.to_physical([e], xh[None, :]))[0]
        e = nxt
    raise InversionError(f"no preimage found for {y} at t={t}")
