from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import hypergeom

from confexec import analysis
from confexec.storage import ParameterError


@pytest.mark.parametrize("n,c,t,expected", [
    (20, 4, 5, Fraction(67232, 100000)),
    (10, 10, 1, Fraction(1)),
    (10, 1, 0, Fraction(0)),
    (4, 1, 2, Fraction(7, 16)),
])
def test_liveness_delta(n, c, t, expected):
    assert analysis.liveness_delta(n, c, t) == expected


@given(st.integers(1, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))), st.integers(0, 30))
def test_liveness_delta_monotone(nc, t):
    n, c = nc
    assert analysis.liveness_delta(n, c, t) <= analysis.liveness_delta(n, c, t + 1) <= 1


@pytest.mark.parametrize("args", [(3, 4, 1), (3, 0, 1), (3, 1, -1), (3.0, 1, 1)])
def test_liveness_parameter_errors(args):
    with pytest.raises(ParameterError):
        analysis.liveness_delta(*args)


def test_liveness_montecarlo_agrees():
    est = analysis.liveness_montecarlo(analysis.LivenessQuery(12, 3, 3), trials=4000, seed=1)
    assert abs(est.p - float(analysis.liveness_delta(12, 3, 3))) < 4 * est.se
    with pytest.raises(ParameterError):
        analysis.liveness_montecarlo(analysis.LivenessQuery(12, 3, 3), trials=10)


def test_liveness_more_honest_helps():
    one = analysis.liveness_montecarlo(analysis.LivenessQuery(20, 2, 2, 1), trials=3000, seed=2)
    many = analysis.liveness_montecarlo(analysis.LivenessQuery(20, 2, 2, 10), trials=3000, seed=2)
    assert many.p > one.p


def test_rsts_montecarlo_agrees():
    est = analysis.rsts_montecarlo(30, 10, 8, 4, trials=20_000, seed=3)
    exact = hypergeom(30, 10, 8).sf(3)
    assert abs(est.p - exact) < 4 * est.se


@pytest.mark.parametrize("t,flag", [(33, False), (34, True), (35, True), (36, False)])
def test_headline_flag(t, flag):
    assert analysis.is_headline_cell(10000, 3333, 38, t) is flag


def test_headline_cell_values():
    rows = analysis.rsts_sweep([(10000, 3333, 38, 34), (10000, 3333, 38, 35)])
    assert all(r.headline and r.log10 < -12 for r in rows)
    assert rows[0].log10 == pytest.approx(-12.078, abs=1e-3)
    assert rows[1].log10 == pytest.approx(-13.332, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 80).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_sweep_monotone_in_t(nms):
    n, m, s = nms
    rows = analysis.rsts_sweep(analysis.threshold_grid(n, m, s))
    assert analysis.monotone_in_t(rows)
    # t = 1 is one minus the chance of an all-honest subnet
    all_honest = analysis.rsts_epsilon(n, n - m, s, s).exact if n - m >= s else 0
    assert rows[0].epsilon == 1 - all_honest


def test_monotone_detects_violation():
    rows = analysis.rsts_sweep([(10, 4, 5, 3), (10, 4, 5, 4)])
    swapped = [rows[0].__class__(**{**rows[0].__dict__, "t": 4}), rows[1].__class__(**{**rows[1].__dict__, "t": 3})]
    assert not analysis.monotone_in_t(swapped)


def test_sweep_csv():
    rows = analysis.rsts_sweep([(10, 4, 5, 4), (10, 2, 5, 3), (10000, 3333, 38, 35)])
    text = analysis.sweep_csv(rows, flag=True)
    lines = text.splitlines()
    assert lines[0] == "n,m,s,t,epsilon_exact,epsilon_log10,headline"
    assert lines[1].startswith("10,4,5,4,1/42,")
    assert lines[2].split(",")[4:6] == ["0/1", "-inf"]
    assert lines[3].endswith("True")
    assert "headline" not in analysis.sweep_csv(rows).splitlines()[0]
