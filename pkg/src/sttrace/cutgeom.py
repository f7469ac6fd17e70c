"""Cut topology of Gamma_lin on each slab and the matching quadrature rules.

The zero level of the spatially linear level set phi_hat is a straight
segment in every cut triangle. Its topology inside a triangle only changes
when a vertex value of phi_hat changes sign, so time integrals are split at
those instants (the breakpoints) before Gauss rules are applied.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCutError
from .levelset import ZERO_SHIFT
from .quadrature import gauss_legendre, triangle_rule

# windows shorter than this fraction of the slab are dropped
MIN_WINDOW = 1e-14
# bisection tolerance on the normalised slab time
ROOT_TOL = 1e-13

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CutTopologySlab:
    """Active triangles of one slab and their cut-topology windows.

    Windows are stored flat: window ``w`` belongs to active triangle
    ``active[win_owner[w]]``, spans ``[win_t0[w], win_t1[w]]`` and is cut by
    Gamma_lin iff ``win_cut[w]``.
    """

    n: int
    t0: float
    t1: float
    active: np.ndarray
    win_owner: np.ndarray
    win_t0: np.ndarray
    win_t1: np.ndarray
    win_cut: np.ndarray
    scale: float

    @property
    def n_active(self):
        return len(self.active)

    def breakpoints(self, i):
        """Sorted breakpoint set of the ``i``-th active triangle."""
        sel = self.win_owner == i
        return np.concatenate([self.win_t0[sel], self.win_t1[sel][-1:]])

    def local_index(self, elems):
        """Position of global triangle ids within ``active`` (-1 if inactive)."""
        elems = np.asarray(elems)
        pos = np.minimum(np.searchsorted(self.active, elems), max(len(self.active) - 1, 0))
        if len(self.active) == 0:
            return np.full(elems.shape, -1)
        return np.where(self.active[pos] == elems, pos, -1)


def shift_zeros(values, scale):
    """Replace exact zeros by ``+ZERO_SHIFT * scale`` (fixed sign convention)."""
    eps = ZERO_SHIFT * scale if scale > 0 else ZERO_SHIFT
    return np.where(values == 0.0, eps, values)


def _vertex_roots(ls, verts, scale):
    """Sign-change instants (normalised to [0, 1]) of t -> phi_hat(x_V, t).

    Returns an array (len(verts), r_max) padded with NaN.
    """
    tb = ls.time_basis
    c = ls.vertex_values[verts]
    k = ls.k_gq
    if k == 1:
        v0 = shift_zeros(c[:, 0], scale)
        v1 = shift_zeros(c[:, 1], scale)
        roots = np.full((len(verts), 1), np.nan)
        ch = np.sign(v0) != np.sign(v1)
        roots[ch, 0] = v0[ch] / (v0[ch] - v1[ch])
        return roots
    # dense sampling brackets, then vectorised bisection
    ns = 8 * k
    s = np.linspace(0.0, 1.0, ns + 1)
    vals = shift_zeros(c @ tb(s).T, scale)
    sg = np.sign(vals)
    iv, js = np.nonzero(sg[:, :-1] != sg[:, 1:])
    if len(iv) == 0:
        return np.full((len(verts), 1), np.nan)
    lo, hi = s[js].copy(), s[js + 1].copy()
    flo = sg[iv, js]
    cc = c[iv]
    while np.max(hi - lo) > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        fm = np.sign(shift_zeros(np.einsum("nm,nm->n", cc, tb(mid)), scale))
        same = fm == flo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    r = 0.5 * (lo + hi)
    counts = np.bincount(iv, minlength=len(verts))
    roots = np.full((len(verts), max(counts.max(), 1)), np.nan)
    order = np.argsort(iv, kind="stable")
    iv, r = iv[order], r[order]
    rank = np.arange(len(iv)) - np.searchsorted(iv, iv)
    roots[iv, rank] = r
    return roots


def detect_active(ls, mesh=None, slab=None):
    """Active set, breakpoints and cut pattern per window on one slab.

    Parameters
    ----------
    ls : DiscreteLevelSet
    mesh, slab : optional
        Accepted for interface symmetry; taken from ``ls`` when omitted.

    Returns
    -------
    CutTopologySlab
        Possibly with an empty active set.
    """
    mesh = ls.mesh if mesh is None else mesh
    t0, t1 = ls.t0, ls.t1
    scale = ls.scale
    tri = mesh.triangles

    roots = _vertex_roots(ls, np.arange(mesh.n_vertices), scale)
    has_root = np.any(np.isfinite(roots), axis=1)
    sign0 = np.sign(shift_zeros(ls.vertex_values_at(t0), scale))
    s_tri = sign0[tri]
    mixed0 = (s_tri.min(axis=1) < 0) & (s_tri.max(axis=1) > 0)
    cand = np.nonzero(mixed0 | has_root[tri].any(axis=1))[0]
    if len(cand) == 0:
        e = np.empty(0)
        return CutTopologySlab(ls.n, t0, t1, np.empty(0, dtype=np.int64), e.astype(np.int64), e, e, e.astype(bool), scale)

    r = roots[tri[cand]].reshape(len(cand), -1)
    r = np.where((r > 0.0) & (r < 1.0), r, np.nan)
    bp = np.concatenate([np.zeros((len(cand), 1)), np.sort(r, axis=1), np.ones((len(cand), 1))], axis=1)
    bp = np.sort(bp, axis=1)  # NaN sorts last
    a, b = bp[:, :-1], bp[:, 1:]
    valid = np.isfinite(a) & np.isfinite(b) & (b - a > MIN_WINDOW)
    ci, wi = np.nonzero(valid)
    wa, wb = a[ci, wi], b[ci, wi]
    mid = 0.5 * (wa + wb)
    vv = ls.vertex_values[tri[cand[ci]]]
    vals = np.einsum("nvm,nm->nv", vv, ls.time_basis(mid))
    sg = np.sign(shift_zeros(vals, scale))
    cut = (sg.min(axis=1) < 0) & (sg.max(axis=1) > 0)

    is_active = np.zeros(len(cand), dtype=bool)
    np.logical_or.at(is_active, ci, cut)
    active = cand[is_active]
    remap = np.cumsum(is_active) - 1
    keep = is_active[ci]
    dt = t1 - t0
    return CutTopologySlab(
        n=ls.n,
        t0=t0,
        t1=t1,
        active=active,
        win_owner=remap[ci[keep]],
        win_t0=t0 + dt * wa[keep],
        win_t1=t0 + dt * wb[keep],
        win_cut=cut[keep],
        scale=scale,
    )


def _segments_ref(values):
    """Reference-triangle cut segments for rows of vertex values (no zeros).

    Returns
    -------
    p, q : ndarray (n, 2)
        Endpoints (undefined where ``mask`` is False).
    mask : bool array (n,)
    """
    sg = np.sign(values)
    npos = (sg > 0).sum(axis=1)
    mask = (npos == 1) | (npos == 2)
    # the lone vertex has the minority sign
    minority = np.where(npos == 1, 1.0, -1.0)
    lone = np.argmax(sg == minority[:, None], axis=1)
    i = lone
    j = (i + 1) % 3
    k = (i + 2) % 3
    rows = np.arange(len(values))
    vi, vj, vk = values[rows, i], values[rows, j], values[rows, k]
    Xi, Xj, Xk = _REF_VERTS[i], _REF_VERTS[j], _REF_VERTS[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        sj = vi / (vi - vj)
        sk = vi / (vi - vk)
        p = Xi + sj[:, None] * (Xj - Xi)
        q = Xi + sk[:, None] * (Xk - Xi)
    return p, q, mask


def cut_segment(values, vertices=None, scale=None):
    """Zero level of the linear interpolant of ``values`` in one triangle.

    Parameters
    ----------
    values : array_like (3,)
        Vertex values of phi_hat.
    vertices : array_like (3, 2), optional
        Physical vertex coordinates; the reference triangle when omitted.
    scale : float, optional
        Size used for the zero shift; defaults to ``max |values|``.

    Returns
    -------
    tuple of two ndarray (2,) or None

    Raises
    ------
    DegenerateCutError
        If all three values are zero.
    """
    v = np.asarray(values, dtype=float).reshape(1, 3)
    if np.all(v == 0.0):
        raise DegenerateCutError("phi_hat vanishes on the whole triangle")
    scale = float(np.abs(v).max()) if scale is None else scale
    p, q, mask = _segments_ref(shift_zeros(v, scale))
    if not mask[0]:
        return None
    p, q = p[0], q[0]
    if vertices is not None:
        X = np.asarray(vertices, dtype=float)
        B = np.column_stack([X[1] - X[0], X[2] - X[0]])
        p, q = B @ p + X[0], B @ q + X[0]
    return p, q


@dataclass(frozen=True, eq=False)
class SurfaceQuadrature:
    """Point rule on Gamma_lin(t) x I_n (or on a single time slice).

    Points are grouped by active triangle: ``owner`` is non-decreasing.
    ``weight`` already includes the temporal weight and the arclength on
    Gamma_lin; geometric factors of the deformation are applied downstream.
    """

    owner: np.ndarray
    elems: np.ndarray
    xhat: np.ndarray
    x: np.ndarray
    t: np.ndarray
    weight: np.ndarray
    L: int = 0
    q_s: int = 0

    def __len__(self):
        return len(self.weight)

    @property
    def total(self):
        return float(self.weight.sum())


def _empty_surface(L, q_s):
    z = np.empty(0)
    return SurfaceQuadrature(z.astype(np.int64), z.astype(np.int64), np.empty((0, 2)), np.empty((0, 2)), z, z, L, q_s)


def _segment_rule(mesh, ls, owners, elems, t, q_s, scale, slice_w=None):
    """q_s Gauss points on the cut segments of ``elems`` at times ``t``.

    ``slice_w`` (optional) multiplies the weights of each time slice.
    """
    tri = mesh.triangles[elems]
    vals = shift_zeros(ls.vertex_values_at(t, tri), scale)
    p, q, mask = _segments_ref(vals)
    owners, elems, t, p, q = owners[mask], elems[mask], t[mask], p[mask], q[mask]
    B = mesh.affine[0][elems]
    length = np.linalg.norm(np.einsum("nij,nj->ni", B, q - p), axis=1)
    if slice_w is not None:
        length = length * slice_w[mask]
    gs, gw = gauss_legendre(q_s)
    xhat = p[:, None, :] + gs[None, :, None] * (q - p)[:, None, :]
    w = length[:, None] * gw[None, :]
    rep = lambda a: np.repeat(a, q_s, axis=0)
    xhat = xhat.reshape(-1, 2)
    el = rep(elems)
    return rep(owners), el, xhat, mesh.to_physical(el, xhat), rep(t), w.ravel()


def build_surface_quadrature(topo, ls, L=None, q_s=None, k_s=1, k_q=1):
    """Topology-aware rule for space-time integrals over Gamma_lin(t), t in I_n.

    Each cut window gets ``L`` Gauss-Legendre times and each time slice
    ``q_s`` Gauss points on the cut segment. Defaults: ``L = 2 k_q + 2`` and
    ``q_s = k_s + 1``.
    """
    L = 2 * k_q + 2 if L is None else L
    q_s = k_s + 1 if q_s is None else q_s
    if L < 1 or q_s < 1:
        raise ValueError("L and q_s must be positive")
    sel = np.nonzero(topo.win_cut)[0]
    if len(sel) == 0:
        return _empty_surface(L, q_s)
    ts, tw = gauss_legendre(L)
    a, b = topo.win_t0[sel], topo.win_t1[sel]
    times = (a[:, None] + (b - a)[:, None] * ts[None, :]).ravel()
    wt = ((b - a)[:, None] * tw[None, :]).ravel()
    owners = np.repeat(topo.win_owner[sel], L)
    elems = topo.active[owners]
    mesh = ls.mesh
    o, el, xh, x, t, w = _segment_rule(mesh, ls, owners, elems, times, q_s, topo.scale, wt)
    order = np.argsort(o, kind="stable")
    return SurfaceQuadrature(o[order], el[order], xh[order], x[order], t[order], w[order], L, q_s)


def build_boundary_quadrature(topo, ls, t_b, q_s):
    """Rule on Gamma_lin(t_b) restricted to the active triangles of ``topo``."""
    if topo.n_active == 0:
        return _empty_surface(0, q_s)
    owners = np.arange(topo.n_active)
    t = np.full(topo.n_active, float(t_b))
    o, el, xh, x, tt, w = _segment_rule(ls.mesh, ls, owners, topo.active, t, q_s, topo.scale)
    return SurfaceQuadrature(o, el, xh, x, tt, w, 0, q_s)


@dataclass(frozen=True, eq=False)
class PrismQuadrature:
    """Tensor Gauss rule on the active prisms K x I_n, grouped by triangle."""

    owner: np.ndarray
    elems: np.ndarray
    xhat: np.ndarray
    x: np.ndarray
    t: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.weight)

    @property
    def total(self):
        return float(self.weight.sum())


def build_prism_quadrature(topo, mesh, slab=None, q_s=2, q_t=2):
    """Tensor product of a triangle rule (degree ``q_s``) and ``q_t`` Gauss times.

    ``slab`` is accepted for interface symmetry; the slab interval is taken
    from ``topo``.
    """
    if q_s < 1 or q_t < 1:
        raise ValueError("quadrature orders must be positive")
    n = topo.n_active
    if n == 0:
        z = np.empty(0)
        return PrismQuadrature(z.astype(np.int64), z.astype(np.int64), np.empty((0, 2)), np.empty((0, 2)), z, z)
    xq, wq = triangle_rule(q_s)
    ts, tw = gauss_legendre(q_t)
    dt = topo.t1 - topo.t0
    nq, nt = len(wq), len(tw)
    owner = np.repeat(np.arange(n), nq * nt)
    elems = topo.active[owner]
    xhat = np.tile(np.repeat(xq, nt, axis=0), (n, 1))
    t = np.tile(np.tile(topo.t0 + dt * ts, nq), n)
    detB = 2.0 * mesh.areas[topo.active]
    w = (detB[:, None] * np.outer(wq, tw).ravel()[None, :] * dt).ravel()
    return PrismQuadrature(owner, elems, xhat, mesh.to_physical(elems, xhat), t, w)
