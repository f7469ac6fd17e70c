import numpy as np
import pytest
from sklearn.base import clone

from sttrace import SpaceTimeTraceFEM
from sttrace.exceptions import ConfigurationError
from sttrace.scenes import get_scene


def test_params_roundtrip():
    est = SpaceTimeTraceFEM(k=2, beta=0.5, level_s=1)
    p = est.get_params()
    assert p["k"] == 2 and p["beta"] == 0.5 and p["level_s"] == 1 and p["k_g"] is None
    c = clone(est).set_params(beta=1.0)
    assert c.beta == 1.0 and est.beta == 0.5


def test_not_fitted():
    with pytest.raises(AttributeError):
        SpaceTimeTraceFEM().predict([[0, 0, 0]])


def test_bad_inputs():
    with pytest.raises(ConfigurationError):
        SpaceTimeTraceFEM().fit(42)
    with pytest.raises(ConfigurationError):
        SpaceTimeTraceFEM(level_s=-1).fit("moving_circle")
    with pytest.raises(ConfigurationError):
        SpaceTimeTraceFEM(beta=3.0).fit("moving_circle")


def test_fit_attributes(fitted_l1):
    assert fitted_l1.grid_.N == 8 and fitted_l1.scene_.name == "moving_circle"
    assert fitted_l1.score().energy == pytest.approx(0.1383804983457568, rel=1e-8)


def test_predict_on_surface(fitted_l1):
    sc = get_scene("moving_circle")
    th = np.linspace(0, 2 * np.pi, 7)[:-1]
    pts = []
    for t in (0.0, 0.3, 0.5, 1.0):
        c = sc.center(np.array([t]))[0]
        r = float(sc.radius(t))
        pts += [[c[0] + r * np.cos(a), c[1] + r * np.sin(a), t] for a in th]
    X = np.array(pts)
    u = fitted_l1.predict(X)
    assert np.all(np.isfinite(u))
    assert np.max(np.abs(u - sc.u_exact(X[:, :2], X[:, 2]))) < 0.1


def test_predict_outside():
    est = SpaceTimeTraceFEM().fit("moving_circle")
    u = est.predict([[0.95, -0.95, 0.5], [0.0, 0.0, 2.0]])
    assert np.all(np.isnan(u))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 2)))


def test_scene_object():
    est = SpaceTimeTraceFEM(source="zero").fit(get_scene("stationary_circle", solution="constant", value=3.0))
    assert est.predict([[0.5, 0.0, 0.5]])[0] == pytest.approx(3.0, abs=1e-10)
