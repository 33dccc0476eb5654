import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tieq import ogsolver as og
from tieq import flow as fl
from tieq.model import OgEconomy, Linear


def test_interval_endpoints(econ, interval):
    t = econ.tech
    assert t.df(interval.k_lo) == pytest.approx(econ.delta, rel=1e-13)
    assert t.df(interval.k_hi) == pytest.approx(econ.lrp_marginal, rel=1e-13)
    assert interval.k_lo == pytest.approx(9.97, abs=0.01)
    assert interval.k_hi == pytest.approx(23.06, abs=0.03)


def test_linear_tech_has_no_interval(econ):
    with pytest.raises(og.UnsupportedTechnology):
        og.steady_state_interval(econ.with_(tech=Linear(1.0)))


@given(mu=st.floats(1e-12, 5.0))
@settings(max_examples=60, deadline=None)
def test_branches_solve_equation(mu):
    for side in ("below", "above"):
        x = og.branch_solve_x(mu, side)
        assert (x <= 0) if side == "below" else (x >= 0)
        assert x - math.log1p(x) == pytest.approx(mu, rel=1e-10, abs=1e-15)


def test_seed_boundary_values(econ, interval):
    kb = interval.at(0.5)
    s = og.taylor_seed(econ, kb)
    v, w = og.boundary_values(econ, kb)
    d, r, p = econ.delta, econ.rho, econ.pi
    # v - w is the value of those alive: ln f / (delta + pi)
    assert v - w == pytest.approx(math.log(econ.tech.f(kb)) / (d + p), rel=1e-13)
    assert s.dv == pytest.approx(1 / econ.tech.f(kb))
    assert s.stability < 0


@pytest.mark.parametrize("kb", [8.0, 30.0])
def test_outside_interval_rejected(econ, kb):
    with pytest.raises(og.InadmissibleSteadyState):
        og.solve_value_pair(econ, kb)


def test_stability_sign_across_interval(econ, interval):
    ks = np.linspace(interval.k_lo, interval.k_hi, 30)[1:-1]
    assert np.all(og.stability_closed_form(econ, ks) < 0)
    assert og.stability_closed_form(econ, interval.k_hi) == pytest.approx(0, abs=1e-15)


def test_pair_residuals(solved):
    for frac, (pair, pol) in solved.items():
        econ = pair.econ
        ks = np.linspace(*pol.domain, 5)
        ie = fl.ie_residual(pol, econ.tech, econ.kernel, econ.utility, ks, pair.value)
        de = fl.de_residual(pol, econ.tech, econ.kernel, econ.utility, ks, pair.value, pair.dvalue)
        assert np.max(np.abs(ie)) < 1e-5, frac
        assert np.max(np.abs(de)) < 1e-5, frac


def test_policy_matches_output_at_kbar(solved):
    for pair, pol in solved.values():
        assert float(pol(pair.kbar)) == pytest.approx(pair.econ.tech.f(pair.kbar), rel=1e-12)
        lo, hi = pol.domain
        k = np.linspace(lo, hi, 201)
        drift = pair.econ.tech.f(k) - pol(k)
        # capital moves toward kbar from both sides
        assert np.all(drift[k < pair.kbar - 1e-9] > 0)
        assert np.all(drift[k > pair.kbar + 1e-9] < 0)


def test_cross_solver_agreement(solved):
    for pair, pol in solved.values():
        lo = pol.domain[0]
        k, sig = og.solve_desingularized(pair.econ, pair.kbar, lo + 0.05 * (pair.kbar - lo))
        m = k < pair.kbar - 0.01 * pair.kbar
        rel = np.abs(sig[m] - pol(k[m])) / sig[m]
        assert rel.max() < 1e-4


def test_stability_numerical_vs_closed(solved):
    for pair, pol in solved.values():
        closed, num = og.stability_test(pair.econ, pair, pair.kbar)
        assert closed < 0
        assert abs(num - closed) <= 1e-3 * abs(closed)


def test_near_top_of_interval(econ, interval):
    # stability ~ 1e-5 here; the left branch starts from the series
    pair, pol = og.solve_value_pair(econ, interval.k_hi - 0.02)
    assert pair.info["left_start"] == "series"
    assert pair.domain[0] < pair.kbar < pair.domain[1]


def test_time_consistent_branch(tc_solved):
    e, (pair, pol) = tc_solved
    assert pair.kbar == pytest.approx(og.golden_rule_capital(e))
    assert e.tech.df(pair.kbar) == pytest.approx(e.delta)
    ks = np.linspace(*pol.domain, 5)
    ie = fl.ie_residual(pol, e.tech, e.kernel, e.utility, ks, pair.value)
    assert np.max(np.abs(ie)) < 1e-6


def test_welfare_split(solved):
    pair, _ = solved[0.5]
    living, unborn = og.welfare_split(pair, pair.kbar)
    assert living == pytest.approx(math.log(pair.econ.tech.f(pair.kbar)) / (pair.econ.delta + pair.econ.pi), rel=1e-10)


def test_stable_without_rho_below_pi():
    # the local stability argument assumes rho < pi; check the other regime numerically
    e = OgEconomy.make(rho=0.05, pi=0.02)
    assert not e.rho_below_pi
    I = og.steady_state_interval(e)
    for frac in (0.25, 0.75):
        kb = I.at(frac)
        pair, pol = og.solve_value_pair(e, kb)
        closed, num = og.stability_test(e, pair, kb)
        assert closed < 0 and num < 0
        ks = np.linspace(*pol.domain, 4)
        assert np.max(np.abs(fl.ie_residual(pol, e.tech, e.kernel, e.utility, ks, pair.value))) < 1e-5
