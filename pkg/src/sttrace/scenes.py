"""Analytic level-set scenes with velocities and (optionally) exact solutions.

All callables take points ``x`` of shape (n, 2) and times ``t`` broadcastable
to (n,). Derivatives are hand-coded.
"""

import numpy as np

from .exceptions import ConfigurationError, UnsupportedSceneError

_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _t(t, n):
    return np.broadcast_to(np.asarray(t, dtype=float), (n,))


class AnalyticScene:
    """Base class; subclasses supply the level set, velocity and data.

    Attributes
    ----------
    domain : tuple (x0, x1, y0, y1)
    T : float
    has_exact : bool
        Whether ``u_exact`` and its derivatives are available.
    """

    name = "scene"
    domain = (-1.0, 1.0, -1.0, 1.0)
    T = 1.0
    has_exact = False
    has_closest_point = False

    # level set -------------------------------------------------------
    def phi(self, x, t):
        raise NotImplementedError

    def grad_phi(self, x, t):
        raise NotImplementedError

    def dphi_dt(self, x, t):
        raise NotImplementedError

    def hess_phi(self, x, t):
        raise NotImplementedError

    # velocity --------------------------------------------------------
    def w(self, x, t):
        raise NotImplementedError

    def grad_w(self, x, t):
        """Jacobian dw_i/dx_j, shape (n, 2, 2)."""
        raise NotImplementedError

    def normal_velocity(self, x, t):
        """-phi_t / |grad phi|, the exact w.n extended off the surface."""
        g = self.grad_phi(x, t)
        return -self.dphi_dt(x, t) / np.linalg.norm(g, axis=-1)

    def alpha(self, x, t):
        return np.sqrt(1.0 + self.normal_velocity(x, t) ** 2)

    # data ------------------------------------------------------------
    def u0(self, x):
        return self.u_exact(x, 0.0)

    def u_exact(self, x, t):
        raise UnsupportedSceneError(f"scene {self.name!r} has no exact solution")

    def grad_u(self, x, t):
        raise UnsupportedSceneError(f"scene {self.name!r} has no exact solution")

    def hess_u(self, x, t):
        raise UnsupportedSceneError(f"scene {self.name!r} has no exact solution")

    def du_dt(self, x, t):
        raise UnsupportedSceneError(f"scene {self.name!r} has no exact solution")

    def closest_point(self, x, t):
        """Closest point on Gamma(t) and its spatial Jacobian."""
        raise UnsupportedSceneError(f"scene {self.name!r} has no closest-point map")

    def extension(self, x, t):
        """Solution extended constantly along normals: value and spatial gradient."""
        p, Dp = self.closest_point(x, t)
        val = self.u_exact(p, t)
        grad = np.einsum("nji,nj->ni", Dp, self.grad_u(p, t))
        return val, grad


class _Circle(AnalyticScene):
    """Circle with centre c(t) and radius r(t); phi is a signed distance."""

    has_closest_point = True

    def center(self, t):
        raise NotImplementedError

    def center_dot(self, t):
        raise NotImplementedError

    def radius(self, t):
        raise NotImplementedError

    def radius_dot(self, t):
        raise NotImplementedError

    def _geom(self, x, t):
        t = _t(t, len(x))
        d = x - self.center(t)
        rho = np.linalg.norm(d, axis=-1)
        return t, d, rho

    def phi(self, x, t):
        t, d, rho = self._geom(x, t)
        return rho - self.radius(t)

    def grad_phi(self, x, t):
        _, d, rho = self._geom(x, t)
        return d / rho[:, None]

    def dphi_dt(self, x, t):
        t, d, rho = self._geom(x, t)
        n = d / rho[:, None]
        return -(n * self.center_dot(t)).sum(-1) - self.radius_dot(t)

    def hess_phi(self, x, t):
        _, d, rho = self._geom(x, t)
        n = d / rho[:, None]
        return (np.eye(2) - n[:, :, None] * n[:, None, :]) / rho[:, None, None]

    def closest_point(self, x, t):
        t, d, rho = self._geom(x, t)
        r = self.radius(t)
        n = d / rho[:, None]
        p = self.center(t) + r[:, None] * n
        Dp = (r / rho)[:, None, None] * (np.eye(2) - n[:, :, None] * n[:, None, :])
        return p, Dp


class MovingCircle(_Circle):
    """Shrinking circle whose centre travels on a half circle.

    phi = |x - c(t)| - 0.45 exp(-t/4), c(t) = (cos(pi t), sin(pi t)) / 2,
    w = -phi_t grad(phi) + (1/2) rot(grad(phi)), u = y (x^2 + 1) exp(-t).
    """

    name = "moving_circle"
    domain = (-1.0, 1.0, -1.0, 1.0)
    T = 1.0
    has_exact = True

    def center(self, t):
        return 0.5 * np.column_stack([np.cos(np.pi * t), np.sin(np.pi * t)])

    def center_dot(self, t):
        return 0.5 * np.pi * np.column_stack([-np.sin(np.pi * t), np.cos(np.pi * t)])

    def radius(self, t):
        return 0.45 * np.exp(-np.asarray(t) / 4.0)

    def radius_dot(self, t):
        return -0.25 * self.radius(t)

    def w(self, x, t):
        n = self.grad_phi(x, t)
        return -self.dphi_dt(x, t)[:, None] * n + 0.5 * n @ _ROT.T

    def grad_w(self, x, t):
        t = _t(t, len(x))
        n = self.grad_phi(x, t)
        H = self.hess_phi(x, t)
        pt = self.dphi_dt(x, t)
        grad_pt = -np.einsum("nij,ni->nj", H, self.center_dot(t))
        return -n[:, :, None] * grad_pt[:, None, :] - pt[:, None, None] * H + 0.5 * np.einsum("ik,nkj->nij", _ROT, H)

    def u_exact(self, x, t):
        t = _t(t, len(x))
        return x[:, 1] * (x[:, 0] ** 2 + 1.0) * np.exp(-t)

    def grad_u(self, x, t):
        t = _t(t, len(x))
        e = np.exp(-t)
        return np.column_stack([2.0 * x[:, 0] * x[:, 1] * e, (x[:, 0] ** 2 + 1.0) * e])

    def hess_u(self, x, t):
        t = _t(t, len(x))
        e = np.exp(-t)
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = 2.0 * x[:, 1] * e
        H[:, 0, 1] = H[:, 1, 0] = 2.0 * x[:, 0] * e
        H[:, 1, 1] = 0.0
        return H

    def du_dt(self, x, t):
        return -self.u_exact(x, t)


class StationaryCircle(_Circle):
    """Circle at rest (w = 0).

    Parameters
    ----------
    radius : float
    solution : {"decay", "x", "constant"}
        ``"decay"``: u = x exp(-t / r^2), an exact solution with f = 0.
        ``"x"``: u = x (a steady state forced by f).
        ``"constant"``: u = ``value``.
    """

    name = "stationary_circle"
    has_exact = True

    def __init__(self, radius=0.5, solution="decay", value=1.0, domain=(-1.0, 1.0, -1.0, 1.0), T=1.0, mu_d=1.0):
        if solution not in ("decay", "x", "constant"):
            raise ConfigurationError(f"unknown solution {solution!r}")
        self.r = float(radius)
        self.solution = solution
        self.value = float(value)
        self.domain = tuple(domain)
        self.T = float(T)
        self.mu_d = float(mu_d)

    def center(self, t):
        return np.zeros((np.size(t), 2))

    def center_dot(self, t):
        return np.zeros((np.size(t), 2))

    def radius(self, t):
        return np.full(np.shape(t), self.r)

    def radius_dot(self, t):
        return np.zeros(np.shape(t))

    def w(self, x, t):
        return np.zeros_like(x)

    def grad_w(self, x, t):
        return np.zeros((len(x), 2, 2))

    def _rate(self):
        return self.mu_d / self.r**2 if self.solution == "decay" else 0.0

    def u_exact(self, x, t):
        t = _t(t, len(x))
        if self.solution == "constant":
            return np.full(len(x), self.value)
        return x[:, 0] * np.exp(-self._rate() * t)

    def grad_u(self, x, t):
        t = _t(t, len(x))
        g = np.zeros((len(x), 2))
        if self.solution != "constant":
            g[:, 0] = np.exp(-self._rate() * t)
        return g

    def hess_u(self, x, t):
        return np.zeros((len(x), 2, 2))

    def du_dt(self, x, t):
        return -self._rate() * self.u_exact(x, t)


class MovingLine(AnalyticScene):
    """Straight line a.x + c t + b = 0 translated with constant velocity.

    With |a| = 1 the velocity is w = -c a, so w.n = -c exactly. Used for
    checks where polynomial level sets are reproduced exactly.
    """

    name = "moving_line"
    has_exact = True

    def __init__(self, normal=(1.0, 0.0), speed=1.0, offset=0.0, domain=(-1.0, 1.0, -1.0, 1.0), T=1.0):
        a = np.asarray(normal, dtype=float)
        self.a = a / np.linalg.norm(a)
        self.c = -float(speed)
        self.b = float(offset)
        self.domain = tuple(domain)
        self.T = float(T)

    def phi(self, x, t):
        return x @ self.a + self.c * _t(t, len(x)) + self.b

    def grad_phi(self, x, t):
        return np.broadcast_to(self.a, x.shape).copy()

    def dphi_dt(self, x, t):
        return np.full(len(x), self.c)

    def hess_phi(self, x, t):
        return np.zeros((len(x), 2, 2))

    def w(self, x, t):
        return np.broadcast_to(-self.c * self.a, x.shape).copy()

    def grad_w(self, x, t):
        return np.zeros((len(x), 2, 2))

    def u_exact(self, x, t):
        return np.ones(len(x))

    def grad_u(self, x, t):
        return np.zeros((len(x), 2))

    def hess_u(self, x, t):
        return np.zeros((len(x), 2, 2))

    def du_dt(self, x, t):
        return np.zeros(len(x))


class MergingCircles(AnalyticScene):
    """Two circles that approach and merge.

    phi = 1 - 1/|x - c+|^2 - 1/|x - c-|^2, c+- = +-(3/2)(t - 1, 0),
    w = -phi_t grad(phi) / |grad(phi)|^2, u0 = x + 15, f = 0.
    """

    name = "merging_circles"
    domain = (-3.0, 3.0, -3.0, 3.0)
    T = 1.0
    has_exact = False
    # floor for |x - c|^2: keeps phi finite at a vertex that coincides with a centre
    _floor = 1e-10

    def _centers(self, t):
        cp = np.column_stack([1.5 * (t - 1.0), np.zeros_like(t)])
        cdot = np.column_stack([np.full_like(t, 1.5), np.zeros_like(t)])
        return [(cp, cdot), (-cp, -cdot)]

    def _terms(self, x, t):
        t = _t(t, len(x))
        for c, cdot in self._centers(t):
            d = x - c
            a = np.maximum((d**2).sum(-1), self._floor)
            yield d, a, cdot

    def phi(self, x, t):
        out = np.ones(len(x))
        for d, a, _ in self._terms(x, t):
            out -= 1.0 / a
        return out

    def grad_phi(self, x, t):
        out = np.zeros((len(x), 2))
        for d, a, _ in self._terms(x, t):
            out += 2.0 * d / a[:, None] ** 2
        return out

    def dphi_dt(self, x, t):
        out = np.zeros(len(x))
        for d, a, cdot in self._terms(x, t):
            # d/dt (-1/a) = a_t / a^2, a_t = -2 d.cdot
            out += -2.0 * (d * cdot).sum(-1) / a**2
        return out

    def hess_phi(self, x, t):
        out = np.zeros((len(x), 2, 2))
        for d, a, _ in self._terms(x, t):
            out += 2.0 * np.eye(2) / a[:, None, None] ** 2
            out -= 8.0 * d[:, :, None] * d[:, None, :] / a[:, None, None] ** 3
        return out

    def _grad_phi_t(self, x, t):
        out = np.zeros((len(x), 2))
        for d, a, cdot in self._terms(x, t):
            dc = (d * cdot).sum(-1)
            out += -2.0 * cdot / a[:, None] ** 2 + 8.0 * dc[:, None] * d / a[:, None] ** 3
        return out

    def w(self, x, t):
        g = self.grad_phi(x, t)
        return -(self.dphi_dt(x, t) / (g**2).sum(-1))[:, None] * g

    def grad_w(self, x, t):
        g = self.grad_phi(x, t)
        H = self.hess_phi(x, t)
        pt = self.dphi_dt(x, t)
        gpt = self._grad_phi_t(x, t)
        q = (g**2).sum(-1)
        Hg = np.einsum("nij,nj->ni", H, g)
        return (
            -g[:, :, None] * gpt[:, None, :] / q[:, None, None]
            - (pt / q)[:, None, None] * H
            + 2.0 * (pt / q**2)[:, None, None] * g[:, :, None] * Hg[:, None, :]
        )

    def u0(self, x):
        return x[:, 0] + 15.0


SCENES = {
    "moving_circle": MovingCircle,
    "stationary_circle": StationaryCircle,
    "merging_circles": MergingCircles,
    "moving_line": MovingLine,
}

# coarsest mesh size and time step per scene when none is configured
SCENE_DEFAULTS = {
    "moving_circle": (2.0**-2, 2.0**-2),
    "stationary_circle": (2.0**-2, 2.0**-2),
    "moving_line": (2.0**-2, 2.0**-2),
    "merging_circles": (2.0**-1, 2.0**-3),
}


def get_scene(name, **kwargs):
    """Scene instance by name."""
    try:
        cls = SCENES[name]
    except KeyError:
        raise ConfigurationError(f"unknown scene {name!r}; choose from {sorted(SCENES)}") from None
    return cls(**kwargs)
