"""Estimator-style front end: configure, ``fit`` a scene, ``predict`` u_h."""

import logging

import numpy as np
from sklearn.base import BaseEstimator

from .assembly import MethodParams
from .deform import invert_map
from .exceptions import ConfigurationError, InversionError
from .mesh import build_time_grid, level_mesh, locate_points
from .postproc import compute_errors
from .scenes import SCENE_DEFAULTS, AnalyticScene, get_scene
from .solver import march

log = logging.getLogger(__name__)


class SpaceTimeTraceFEM(BaseEstimator):
    """Space-time trace finite element solver for one scene and one level.

    Parameters
    ----------
    k : int
        Polynomial order in space and time (k_s = k_q = k).
    k_g : int, optional
        Geometry order (k_gs = k_gq); defaults to ``k``.
    beta : float
        Position of the material derivative, in [0, 1].
    xi : {"h", "1/h", "zero"}
        Stabilization scaling.
    alpha : {"simple", "improved"}
    r_mode : {"weighted", "one"}
    source : {"auto", "manufactured", "zero"}
    mu_d : float
        Diffusion coefficient.
    h_init, dt_init : float, optional
        Coarsest mesh size and time step; scene defaults when omitted.
    level_s, level_q : int
        Uniform refinements in space and time.
    L, q_s : int, optional
        Quadrature knobs (temporal points per window, points per segment).

    Attributes
    ----------
    solution_ : SpaceTimeSolution
    mesh_, grid_, scene_ :
        The discretisation used by the last ``fit``.

    Examples
    --------
    >>> est = SpaceTimeTraceFEM(k=1, level_s=1, level_q=1).fit("moving_circle")
    >>> est.score().energy < 0.2
    True
    """

    def __init__(
        self,
        k=1,
        k_g=None,
        beta=0.0,
        xi="h",
        alpha="simple",
        r_mode="weighted",
        source="auto",
        mu_d=1.0,
        h_init=None,
        dt_init=None,
        level_s=0,
        level_q=0,
        L=None,
        q_s=None,
    ):
        self.k = k
        self.k_g = k_g
        self.beta = beta
        self.xi = xi
        self.alpha = alpha
        self.r_mode = r_mode
        self.source = source
        self.mu_d = mu_d
        self.h_init = h_init
        self.dt_init = dt_init
        self.level_s = level_s
        self.level_q = level_q
        self.L = L
        self.q_s = q_s

    def _params(self):
        k_g = self.k if self.k_g is None else self.k_g
        return MethodParams(
            beta=self.beta,
            xi_mode=self.xi,
            alpha=self.alpha,
            mu_d=self.mu_d,
            r_mode=self.r_mode,
            k_s=self.k,
            k_q=self.k,
            k_gs=k_g,
            k_gq=k_g,
            L=self.L,
            q_s=self.q_s,
            source=self.source,
        )

    def fit(self, scene, y=None):
        """Run the slab march on ``scene`` (an AnalyticScene or a scene name)."""
        params = self._params()
        if isinstance(scene, str):
            scene = get_scene(scene)
        if not isinstance(scene, AnalyticScene):
            raise ConfigurationError("fit expects an AnalyticScene or a scene name")
        if self.level_s < 0 or self.level_q < 0:
            raise ConfigurationError("levels must be nonnegative")
        h_def, dt_def = SCENE_DEFAULTS.get(scene.name, (2.0**-2, 2.0**-2))
        self.scene_ = scene
        self.mesh_ = level_mesh(scene.domain, self.h_init or h_def, self.level_s)
        self.grid_ = build_time_grid(scene.T, self.dt_init or dt_def, self.level_q)
        self.solution_ = march(params, scene, self.mesh_, self.grid_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "solution_"):
            raise AttributeError("call fit before using the solution")

    def predict(self, X):
        """u_h at space-time points.

        Parameters
        ----------
        X : array_like (n, 3)
            Rows (x, y, t) with y on (or near) the discrete surface Gamma_h(t).
            At a slab end t_n the value of slab n (the limit from below) is
            returned; at t = 0 the initial interpolant.

        Returns
        -------
        ndarray (n,)
            NaN where the point is outside the active region at time t.
        """
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != 3:
            raise ValueError("X must have three columns (x, y, t)")
        sol, mesh = self.solution_, self.mesh_
        t_nodes = sol.grid.t_nodes
        out = np.full(len(X), np.nan)
        slab = np.clip(np.searchsorted(t_nodes, X[:, 2], side="left"), 1, sol.N)
        seeds, _ = locate_points(mesh, np.zeros(len(X), dtype=np.int64), X[:, :2])
        for i, (x, n, seed) in enumerate(zip(X, slab, seeds)):
            t = x[2]
            if not (t_nodes[0] - 1e-12 <= t <= t_nodes[-1] + 1e-12):
                continue
            rec = sol[int(n)]
            fn = sol.initial if t <= t_nodes[0] else rec.solution
            try:
                e, xp = invert_map(rec.deform, x[:2], min(max(t, rec.solution.t0), rec.solution.t1), seed=seed if seed >= 0 else None)
            except InversionError:
                continue
            v, _ = fn.evaluate([e], mesh.to_reference([e], xp[None, :]), [t], strict=False)
            out[i] = v[0]
        return out

    def score(self, X=None, y=None, extension="closest_point"):
        """Error report of the fitted solution (``X`` and ``y`` are ignored)."""
        self._check_fitted()
        return compute_errors(self.solution_, extension)
