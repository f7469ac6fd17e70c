"""Slab-by-slab solution of the discrete space-time problem."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import MethodParams, assemble_slab, parametric_initial_condition
from .cutgeom import build_boundary_quadrature, build_prism_quadrature, build_surface_quadrature, detect_active
from .deform import build_deformation
from .exceptions import EmptyActiveSetError, SolveError
from .femspace import FEFunction, build_dofmap
from .levelset import build_improved_alpha, interpolate_levelset

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


def solve_slab(system, slab=None):
    """Sparse LU solve with a residual check.

    Raises
    ------
    SolveError
        If the factorisation fails or ``|A c - b| > 1e-10 (|b| + 1)``.
    """
    A = sp.csc_matrix(system.A)
    b = np.asarray(system.b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        c = spla.splu(A).solve(b)
    except RuntimeError as exc:
        raise SolveError(f"factorisation failed: {exc}", slab=slab) from exc
    res = np.linalg.norm(A @ c - b)
    if not np.all(np.isfinite(c)) or res > RESIDUAL_TOL * (np.linalg.norm(b) + 1.0):
        raise SolveError(f"residual {res:.3e} above tolerance", slab=slab)
    return c


@dataclass(frozen=True, eq=False)
class SlabRecord:
    """Retained data of one solved slab."""

    n: int
    topo: object
    deform: object
    solution: FEFunction
    residual: float


@dataclass(eq=False)
class SpaceTimeSolution:
    """Discrete solution on all slabs plus the data needed to post-process it."""

    params: MethodParams
    scene: object
    mesh: object
    grid: object
    initial: Optional[FEFunction] = None
    slabs: list = field(default_factory=list)

    @property
    def N(self):
        return len(self.slabs)

    def levelset(self, n):
        """Recompute the (deterministic) level set interpolant of slab ``n``."""
        p = self.params
        return interpolate_levelset(self.scene, self.mesh, self.grid, n, p.k_gs, p.k_gq)

    def __getitem__(self, n):
        return self.slabs[n - 1]


def prepare_slab(params, scene, mesh, grid, n):
    """Geometry of slab ``n``: level set, cut topology and deformation."""
    ls = interpolate_levelset(scene, mesh, grid, n, params.k_gs, params.k_gq)
    topo = detect_active(ls)
    if topo.n_active == 0:
        raise EmptyActiveSetError("no active elements (surface left the domain?)", slab=n)
    deform = build_deformation(ls, topo)
    return ls, topo, deform


def march(params, scene, mesh, grid, callback: Optional[Callable] = None):
    """Solve slab after slab.

    Parameters
    ----------
    params : MethodParams
    scene : AnalyticScene
    mesh : Triangulation
    grid : TimeGrid
    callback : callable, optional
        Called as ``callback(n, record)`` after each slab.

    Returns
    -------
    SpaceTimeSolution

    Raises
    ------
    SolveError
        With the offending slab index; the march stops at the first failure.
    """
    sol = SpaceTimeSolution(params, scene, mesh, grid)
    prev = None
    for n in range(1, grid.N + 1):
        ls, topo, deform = prepare_slab(params, scene, mesh, grid, n)
        dofmap = build_dofmap(topo, mesh, params.k_s, params.k_q)
        if n == 1:
            dm0 = build_dofmap(topo, mesh, params.k_s, 0)
            prev = parametric_initial_condition(scene, deform, dm0, mesh, ls.t0)
            sol.initial = prev
        alpha = None
        if params.alpha == "improved":
            alpha = build_improved_alpha(scene, mesh, grid, n, topo.active, params.k_gs, params.k_gq)
        system = assemble_slab(
            params,
            scene,
            ls,
            topo,
            deform,
            dofmap,
            build_surface_quadrature(topo, ls, params.L_eff, params.q_s_eff),
            build_prism_quadrature(topo, mesh, n, 2 * params.k_s, params.k_q + 1),
            build_boundary_quadrature(topo, ls, ls.t0, params.q_s_eff),
            build_boundary_quadrature(topo, ls, ls.t1, params.q_s_eff),
            prev,
            alpha,
        )
        c = solve_slab(system, slab=n)
        res = float(np.linalg.norm(system.A @ c - system.b))
        fn = FEFunction(dofmap, c, ls.t0, ls.t1, mesh)
        rec = SlabRecord(n, topo, deform, fn, res)
        sol.slabs.append(rec)
        prev = fn
        log.debug("slab %d: %d active, %d dofs, residual %.2e", n, topo.n_active, dofmap.N, res)
        if callback is not None:
            callback(n, rec)
    return sol
