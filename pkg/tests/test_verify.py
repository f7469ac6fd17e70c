import pytest

from sttrace import verify
from sttrace.verify import SUITES, CheckResult, run_suite


def test_check_result_line():
    assert CheckResult("x", True, "d").line() == "x: PASS (d)"
    assert CheckResult("y", False).line().startswith("y: FAIL")


def test_oracles_suite_all_pass():
    res = run_suite("oracles", echo=None)
    assert len(res) == len(SUITES["oracles"])
    failed = [r.line() for r in res if not r.passed]
    assert not failed, failed


def test_run_suite_captures_exceptions(monkeypatch):
    def boom():
        raise RuntimeError("bad")

    monkeypatch.setitem(SUITES, "tmp", [boom])
    res = run_suite("tmp", echo=None)
    assert len(res) == 1 and not res[0].passed and "bad" in res[0].detail


def test_unknown_suite():
    with pytest.raises((KeyError, ValueError)):
        run_suite("nope", echo=None)


def test_normal_velocity_first_order():
    e = verify.normal_velocity_errors()
    assert e == pytest.approx([0.316, 0.161, 0.081], abs=2e-3)


def test_quadrature_l_series_converges():
    vals = verify.quadrature_l_series()
    assert abs(vals[6] - vals[8]) / abs(vals[8]) < 1e-8
