"""Error norms, mass/area series and experimental orders of convergence."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cutgeom import build_boundary_quadrature, build_prism_quadrature, build_surface_quadrature
from .deform import map_points
from .femspace import deformed_gradient

log = logging.getLogger(__name__)


@dataclass
class ErrorReport:
    """Error measures of one run.

    ``terms`` holds the squared parts of the energy norm: ``trace`` (max over
    slab ends), ``jumps``, ``l2``, ``grad`` and ``normal`` (the xi-weighted bulk
    term). Values that cannot be computed are NaN.
    """

    energy: float
    surface_energy: float
    linf_l2: float
    i_mass: np.ndarray
    i_surf: np.ndarray
    e_mass: float
    terms: dict = field(default_factory=dict)
    jumps: np.ndarray = None
    extension: str = "closest_point"


def _exact(scene, y, t, mode):
    if mode == "closest_point":
        return scene.extension(y, t)
    return scene.u_exact(y, t), scene.grad_u(y, t)


def _prev_map(prev_deform, deform, rule):
    """Theta^{n-1} at the reference points of ``rule`` (Theta^n where undefined)."""
    if prev_deform is None:
        return deform.spatial(rule.elems, rule.xhat, rule.t)[0]
    pos = np.searchsorted(prev_deform.elems, rule.elems)
    pos = np.minimum(pos, max(len(prev_deform.elems) - 1, 0))
    ok = prev_deform.elems[pos] == rule.elems
    y = deform.spatial(rule.elems, rule.xhat, rule.t)[0]
    if np.any(ok):
        y[ok] = prev_deform.spatial(rule.elems[ok], rule.xhat[ok], rule.t[ok])[0]
    return y


def compute_errors(sol, extension="closest_point", with_errors=True):
    """All error measures and the mass/area series of a solution.

    Parameters
    ----------
    sol : SpaceTimeSolution
    extension : {"closest_point", "analytic"}
        How u is extended off the surface. ``closest_point`` is the constant
        normal extension required for the bulk term; without a closest-point
        map the energy error falls back to the surface variant.
    with_errors : bool
        Skip the error integrals (mass/area only), e.g. without an exact solution.

    Returns
    -------
    ErrorReport
    """
    scene, p, mesh = sol.scene, sol.params, sol.mesh
    with_errors = with_errors and scene.has_exact
    if with_errors and extension == "closest_point" and not scene.has_closest_point:
        log.warning("scene %r has no closest-point map; reporting the surface energy error", scene.name)
        extension = "analytic"
        bulk = False
    else:
        bulk = True
    xi = p.xi(mesh.h)
    L = p.L_eff + 1
    qs = p.q_s_eff + 1
    N = sol.N
    i_mass = np.zeros(N + 1)
    i_surf = np.zeros(N + 1)
    trace = np.zeros(N)
    jumps = np.zeros(N)
    l2 = grad = normal = 0.0
    prev_fn, prev_def = sol.initial, None
    for n in range(1, N + 1):
        rec = sol[n]
        ls = sol.levelset(n)
        topo, deform, fn = rec.topo, rec.deform, rec.solution
        bottom = build_boundary_quadrature(topo, ls, ls.t0, qs)
        top = build_boundary_quadrature(topo, ls, ls.t1, qs)
        gb = map_points(deform, ls, bottom.elems, bottom.xhat, bottom.t)
        gt = map_points(deform, ls, top.elems, top.xhat, top.t)
        uh_top, _ = fn.evaluate(top.elems, top.xhat, top.t)
        wt = top.weight * gt.meas
        i_mass[n] = (wt * uh_top).sum()
        i_surf[n] = wt.sum()
        if n == 1:
            u0, _ = prev_fn.evaluate(bottom.elems, bottom.xhat, bottom.t)
            wb = bottom.weight * gb.meas
            i_mass[0] = (wb * u0).sum()
            i_surf[0] = wb.sum()
        if not with_errors:
            prev_fn, prev_def = fn, deform
            continue
        ue, _ = _exact(scene, gt.y, gt.t, extension)
        trace[n - 1] = (wt * (ue - uh_top) ** 2).sum()
        # jump [e]^{n-1} on Gamma_h^n(t_{n-1})
        up, _ = fn.evaluate(bottom.elems, bottom.xhat, bottom.t)
        um, _ = prev_fn.evaluate(bottom.elems, bottom.xhat, bottom.t, strict=False)
        if np.any(np.isnan(um)):
            from .assembly import transfer_values

            um = transfer_values(prev_fn, bottom)
        ue_p, _ = _exact(scene, gb.y, gb.t, extension)
        y_m = _prev_map(prev_def, deform, bottom) if n > 1 else gb.y
        ue_m, _ = _exact(scene, y_m, bottom.t, extension)
        jumps[n - 1] = (bottom.weight * gb.meas * ((ue_p - up) - (ue_m - um)) ** 2).sum()
        # space-time surface integrals
        surf = build_surface_quadrature(topo, ls, L, qs)
        gs = map_points(deform, ls, surf.elems, surf.xhat, surf.t)
        uh, guh = fn.evaluate(surf.elems, surf.xhat, surf.t)
        guh = deformed_gradient(guh, gs)
        ue, gue = _exact(scene, gs.y, gs.t, extension)
        ws = surf.weight * gs.meas * np.sqrt(1.0 + gs.V**2)
        l2 += (ws * (ue - uh) ** 2).sum()
        de = gue - guh[:, :2]
        de_t = de - (de * gs.n_h).sum(axis=1)[:, None] * gs.n_h
        grad += (ws * (de_t**2).sum(axis=1)).sum()
        if bulk and xi > 0.0:
            prism = build_prism_quadrature(topo, mesh, n, 2 * p.k_s + 1, p.k_q + 2)
            gp = map_points(deform, ls, prism.elems, prism.xhat, prism.t)
            _, gh = fn.evaluate(prism.elems, prism.xhat, prism.t)
            gh = deformed_gradient(gh, gp)
            _, gue = _exact(scene, gp.y, gp.t, extension)
            dn = ((gue - gh[:, :2]) * gp.n_h).sum(axis=1)
            normal += xi * (prism.weight * np.abs(gp.detA) * dn**2).sum()
        prev_fn, prev_def = fn, deform

    e_mass = float(np.abs(i_mass - i_mass[0]).max())
    if not with_errors:
        nan = float("nan")
        return ErrorReport(nan, nan, nan, i_mass, i_surf, e_mass, {}, None, extension)
    terms = {
        "trace": float(trace.max()),
        "jumps": float(jumps.sum()),
        "l2": float(l2),
        "grad": float(grad),
        "normal": float(normal) if bulk else float("nan"),
    }
    surface_sq = terms["trace"] + terms["jumps"] + terms["l2"] + terms["grad"]
    energy_sq = surface_sq + (terms["normal"] if bulk else 0.0)
    return ErrorReport(
        energy=math.sqrt(energy_sq),
        surface_energy=math.sqrt(surface_sq),
        linf_l2=math.sqrt(terms["trace"]),
        i_mass=i_mass,
        i_surf=i_surf,
        e_mass=e_mass,
        terms=terms,
        jumps=np.sqrt(jumps),
        extension=extension,
    )


def energy_error(sol, extension="closest_point"):
    """Energy-norm error (surface variant if no closest-point map exists)."""
    return compute_errors(sol, extension).energy


def linf_l2_error(sol, extension="closest_point"):
    """max_n of the L2 error on Gamma_h^n(t_n)."""
    return compute_errors(sol, extension).linf_l2


def mass_area_series(sol):
    """(i_mass, i_surf, e_mass) at t_0, ..., t_N."""
    rep = compute_errors(sol, with_errors=False)
    return rep.i_mass, rep.i_surf, rep.e_mass


def compute_eoc(errors):
    """log2 ratios of successive errors; ``None`` where undefined."""
    errors = list(errors)
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a is None or b is None or not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
            out.append(None)
        else:
            out.append(math.log2(a / b))
    return out


ERROR_KEYS = ("err_energy", "err_surface_energy", "err_linf_l2", "e_mass")


@dataclass
class LevelRow:
    l_s: int
    l_q: int
    h: float
    dt: float
    errors: dict
    status: str = "ok"


@dataclass
class ConvergenceReport:
    """Per-level errors and EOCs.

    ``eoc_qs[key][i]`` compares diagonal rows i and i+1; ``eoc_s`` and
    ``eoc_q`` are taken along the finest temporal and spatial level of a
    full grid of runs.
    """

    rows: list
    diagonal: bool = True
    eoc_s: dict = field(default_factory=dict)
    eoc_q: dict = field(default_factory=dict)
    eoc_qs: dict = field(default_factory=dict)

    def finalize(self, key_for_eoc=ERROR_KEYS):
        self.eoc_s, self.eoc_q, self.eoc_qs = {}, {}, {}
        for key in key_for_eoc:
            if self.diagonal:
                diag = sorted(self.rows, key=lambda r: r.l_s)
                if len(diag) >= 2:
                    self.eoc_qs[key] = compute_eoc([r.errors.get(key) for r in diag])
                continue
            ls_vals = sorted({r.l_s for r in self.rows})
            lq_vals = sorted({r.l_q for r in self.rows})
            by = {(r.l_s, r.l_q): r.errors.get(key) for r in self.rows}
            if len(ls_vals) >= 2:
                self.eoc_s[key] = compute_eoc([by.get((s, lq_vals[-1])) for s in ls_vals])
            if len(lq_vals) >= 2:
                self.eoc_q[key] = compute_eoc([by.get((ls_vals[-1], q)) for q in lq_vals])
            diag = [by.get((s, q)) for s, q in zip(ls_vals, lq_vals)]
            if len(diag) >= 2:
                self.eoc_qs[key] = compute_eoc(diag)
        return self

    def row_eocs(self, row, key):
        """(eoc_s, eoc_q, eoc_qs) of ``row`` against its coarser neighbours."""
        by = {(r.l_s, r.l_q): r.errors.get(key) for r in self.rows}
        cur = by.get((row.l_s, row.l_q))

        def eoc(prev):
            if prev not in by:
                return None
            return compute_eoc([by[prev], cur])[0]

        if self.diagonal:
            return None, None, eoc((row.l_s - 1, row.l_q - 1))
        return eoc((row.l_s - 1, row.l_q)), eoc((row.l_s, row.l_q - 1)), eoc((row.l_s - 1, row.l_q - 1))

    def column(self, key):
        return [r.errors.get(key) for r in self.rows]
