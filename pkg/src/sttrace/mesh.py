"""Background triangulation of a rectangle and uniform time slabs."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ConfigurationError


def _divides(length, step, tol=1e-12):
    q = length / step
    return abs(q - round(q)) <= tol * max(1.0, abs(q)) and round(q) >= 1


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Conforming triangle mesh with counter-clockwise triangles.

    Parameters
    ----------
    vertices : ndarray of shape (n_vertices, 2)
    triangles : ndarray of shape (n_triangles, 3)
        Vertex indices, counter-clockwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def _edge_data(self):
        # local edge i joins vertices (i, i+1); the opposite vertex is i+2
        loc = np.array([[0, 1], [1, 2], [2, 0]])
        all_edges = self.triangles[:, loc].reshape(-1, 2)
        key = np.sort(all_edges, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        owner = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_tris[sorted_edges[first], 0] = owner[order][first]
        edge_tris[sorted_edges[~first], 1] = owner[order][~first]
        return edges, tri_edges, edge_tris

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, shape (n_edges, 2)."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """Edge index of local edge i = (v_i, v_{i+1}) of every triangle."""
        return self._edge_data[1]

    @property
    def edge_triangles(self):
        """The (one or two) triangles bordering each edge; -1 marks the boundary."""
        return self._edge_data[2]

    @cached_property
    def neighbors(self):
        """Triangle across local edge i, or -1 on the boundary."""
        et = self.edge_triangles[self.triangle_edges]
        me = np.arange(self.n_triangles)[:, None]
        return np.where(et[..., 0] == me, et[..., 1], et[..., 0])

    @cached_property
    def h(self):
        """Maximum edge length."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d**2).sum(axis=1)).max())

    @cached_property
    def affine(self):
        """Per-triangle affine map x = B @ xhat + b as (B, b, B^{-1})."""
        p = self.vertices[self.triangles]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        return B, p[:, 0], np.linalg.inv(B)

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the three barycentric coordinates, shape (n_triangles, 3, 2)."""
        _, _, Binv = self.affine
        r0, r1 = Binv[:, 0, :], Binv[:, 1, :]
        return np.stack([-(r0 + r1), r0, r1], axis=1)

    def to_reference(self, elems, x):
        """Reference coordinates of physical points ``x`` with respect to ``elems``."""
        _, b, Binv = self.affine
        return np.einsum("nij,nj->ni", Binv[elems], x - b[elems])

    def to_physical(self, elems, xhat):
        B, b, _ = self.affine
        return np.einsum("nij,nj->ni", B[elems], xhat) + b[elems]

    def lagrange_nodes(self, degree):
        """Global numbering of the degree-``degree`` Lagrange nodes.

        Vertices come first (with their mesh numbering), then edge nodes,
        then cell-interior nodes.

        Returns
        -------
        coords : ndarray of shape (n_nodes, 2)
        cell_nodes : ndarray of shape (n_triangles, n_local)
            Global node ids, ordered like :func:`reference_nodes`.
        """
        key = ("lagrange", degree)
        if key not in self._cache:
            self._cache[key] = _number_lagrange_nodes(self, degree)
        return self._cache[key]

    def total_area(self):
        return float(self.areas.sum())


def _number_lagrange_nodes(mesh, k):
    tri = mesh.triangles
    nv, ne, nt = mesh.n_vertices, len(mesh.edges), mesh.n_triangles
    ref = reference_nodes(k)
    nloc = len(ref)
    cell_nodes = np.empty((nt, nloc), dtype=np.int64)
    cell_nodes[:, :3] = tri
    coords = [mesh.vertices]
    ke = k - 1
    if ke > 0:
        # edge nodes ordered from the lower to the higher vertex id
        v0 = mesh.vertices[mesh.edges[:, 0]]
        v1 = mesh.vertices[mesh.edges[:, 1]]
        s = np.arange(1, k) / k
        coords.append((v0[:, None, :] + s[None, :, None] * (v1 - v0)[:, None, :]).reshape(-1, 2))
        loc = np.array([[0, 1], [1, 2], [2, 0]])
        for i in range(3):
            a = tri[:, loc[i, 0]]
            b = tri[:, loc[i, 1]]
            e = mesh.triangle_edges[:, i]
            forward = a < b
            j = np.arange(ke)
            idx = np.where(forward[:, None], j[None, :], ke - 1 - j[None, :])
            cell_nodes[:, 3 + i * ke : 3 + (i + 1) * ke] = nv + e[:, None] * ke + idx
    ni = nloc - 3 - 3 * ke
    if ni > 0:
        start = nv + ne * ke
        cell_nodes[:, 3 + 3 * ke :] = start + np.arange(nt)[:, None] * ni + np.arange(ni)
        interior_ref = ref[3 + 3 * ke :]
        B, b, _ = mesh.affine
        coords.append((np.einsum("nij,qj->nqi", B, interior_ref) + b[:, None, :]).reshape(-1, 2))
    return np.concatenate(coords, axis=0), cell_nodes


def reference_nodes(k):
    """Equispaced Lagrange nodes on the reference triangle.

    Order: the three vertices, the k-1 nodes on each edge (v0->v1, v1->v2,
    v2->v0), then interior nodes.
    """
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = [verts]
    if k > 1:
        s = np.arange(1, k) / k
        for a, b in [(0, 1), (1, 2), (2, 0)]:
            pts.append(verts[a] + s[:, None] * (verts[b] - verts[a]))
        inner = [(i / k, j / k) for j in range(1, k) for i in range(1, k - j) if i + j < k]
        if inner:
            pts.append(np.array(inner))
    return np.concatenate(pts, axis=0)


class ReferenceLagrange:
    """Degree-k Lagrange basis on the reference triangle."""

    def __init__(self, k):
        self.degree = k
        self.nodes = reference_nodes(k)
        self.exponents = np.array([(i, j) for d in range(k + 1) for j in range(d + 1) for i in [d - j]])
        V = self._monomials(self.nodes)
        self._coef = np.linalg.inv(V)

    @property
    def size(self):
        return len(self.nodes)

    def _monomials(self, xhat):
        x = xhat[..., 0:1]
        y = xhat[..., 1:2]
        return x ** self.exponents[:, 0] * y ** self.exponents[:, 1]

    def values(self, xhat):
        """Basis values, shape (..., n_local)."""
        return self._monomials(np.asarray(xhat, dtype=float)) @ self._coef

    def gradients(self, xhat):
        """Reference gradients, shape (..., n_local, 2)."""
        xhat = np.asarray(xhat, dtype=float)
        x = xhat[..., 0:1]
        y = xhat[..., 1:2]
        ex, ey = self.exponents[:, 0], self.exponents[:, 1]
        dx = ex * x ** np.maximum(ex - 1, 0) * y**ey
        dy = ey * x**ex * y ** np.maximum(ey - 1, 0)
        return np.stack([dx @ self._coef, dy @ self._coef], axis=-1)


_REFERENCE_CACHE = {}


def reference_lagrange(k):
    if k not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[k] = ReferenceLagrange(k)
    return _REFERENCE_CACHE[k]


def build_structured_mesh(domain, h_init):
    """Uniform grid of squares of side ``h_init``, each cut along its rising diagonal.

    Parameters
    ----------
    domain : tuple (x0, x1, y0, y1)
    h_init : float
        Side length of the grid squares; the mesh size is ``sqrt(2) * h_init``.
    """
    x0, x1, y0, y1 = map(float, domain)
    if h_init <= 0:
        raise ConfigurationError("h_init must be positive")
    lx, ly = x1 - x0, y1 - y0
    if not (_divides(lx, h_init) and _divides(ly, h_init)):
        raise ConfigurationError(f"h_init={h_init} does not divide the domain sides {lx}, {ly}")
    nx, ny = int(round(lx / h_init)), int(round(ly / h_init))
    xs = x0 + h_init * np.arange(nx + 1)
    ys = y0 + h_init * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    a = (j * (nx + 1) + i).ravel()
    b, c, d = a + 1, a + nx + 2, a + nx + 1
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return Triangulation(vertices, tris)


def refine_uniform(mesh):
    """Red refinement: every triangle is split into four at its edge midpoints."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.concatenate([mesh.vertices, mids])
    t = mesh.triangles
    m = nv + mesh.triangle_edges  # m[:, i] is the midpoint of edge (v_i, v_{i+1})
    tris = np.concatenate(
        [
            np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    return Triangulation(vertices, tris)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into slabs I_n = [t_{n-1}, t_n], n = 1..N."""

    t_nodes: np.ndarray

    @property
    def N(self):
        return len(self.t_nodes) - 1

    @property
    def T(self):
        return float(self.t_nodes[-1])

    @property
    def dt(self):
        return float(self.t_nodes[1] - self.t_nodes[0])

    def slab(self, n):
        """Interval (t_{n-1}, t_n) of slab ``n`` (1-based)."""
        if not 1 <= n <= self.N:
            raise IndexError(f"slab {n} outside 1..{self.N}")
        return float(self.t_nodes[n - 1]), float(self.t_nodes[n])


def build_time_grid(T, dt_init, level=0):
    """Uniform time grid with step ``dt_init * 2**-level``."""
    if T <= 0 or dt_init <= 0:
        raise ConfigurationError("T and dt_init must be positive")
    dt = dt_init * 2.0**-level
    if not _divides(T, dt):
        raise ConfigurationError(f"T={T} is not an integer multiple of dt={dt}")
    N = int(round(T / dt))
    return TimeGrid(np.arange(N + 1) * dt)


def level_mesh(domain, h_init, level):
    """Structured mesh refined uniformly ``level`` times."""
    mesh = build_structured_mesh(domain, h_init)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def locate_points(mesh, seeds, y, tol=1e-12, max_steps=100):
    """Find the triangles containing points ``y`` by walking from ``seeds``.

    Each step moves across the edge opposite the most negative barycentric
    coordinate; walks that have not arrived after ``max_steps`` fall back to
    an exhaustive scan. Points outside the domain get element -1.

    Returns
    -------
    elems : int array (n,)
    xhat : ndarray (n, 2)
        Reference coordinates in the found triangles.
    """
    elems = np.array(seeds, dtype=np.int64, copy=True)
    y = np.asarray(y, dtype=float)
    xhat = np.empty_like(y)
    todo = np.arange(len(y))
    for _ in range(max_steps):
        if len(todo) == 0:
            break
        e = elems[todo]
        xh = mesh.to_reference(e, y[todo])
        xhat[todo] = xh
        lam = np.column_stack([1.0 - xh[:, 0] - xh[:, 1], xh[:, 0], xh[:, 1]])
        worst = lam.argmin(axis=1)
        inside = lam[np.arange(len(e)), worst] >= -tol
        out = todo[~inside]
        nxt = mesh.neighbors[e[~inside], (worst[~inside] + 1) % 3]
        elems[out] = nxt
        todo = out[nxt >= 0]
        elems[out[nxt < 0]] = -1
    _, b, Binv = mesh.affine
    for i in todo:
        xh = np.einsum("nij,nj->ni", Binv, y[i] - b)
        lam = np.column_stack([1.0 - xh[:, 0] - xh[:, 1], xh[:, 0], xh[:, 1]]).min(axis=1)
        best = int(lam.argmax())
        elems[i] = best if lam[best] >= -tol else -1
        xhat[i] = xh[best]
    return elems, xhat
