import numpy as np
import pytest

from tieq import phase as ph
from tieq import ogsolver as og


@pytest.fixture(scope="module")
def path(solved):
    pair, pol = solved[0.5]
    return pair, pol, ph.simulate_policy(pol, pair, pair.econ.tech, 0.8 * pair.kbar, 400.0, n_out=801)


def test_policy_path_solves_autonomous_system(path):
    pair, _, tr = path
    rC, rW = ph.residual_autonomous(tr, pair.econ)
    assert np.nanmax(np.abs(rC)) < 1e-7
    assert np.nanmax(np.abs(rW)) < 1e-7
    assert np.isfinite(rC).sum() > 10


def test_path_monotone_to_kbar(path):
    pair, _, tr = path
    assert np.all(np.diff(tr.K) >= -1e-12)
    lam = og.stability_closed_form(pair.econ, pair.kbar)
    gap0 = pair.kbar - tr.K[0]
    assert 0 < pair.kbar - tr.K[-1] < 2 * gap0 * np.exp(lam * tr.t[-1])


def test_psi_terminal(path):
    pair, _, tr = path
    psi = ph.psi_path(tr, pair.econ)
    assert psi[-1] == pytest.approx(pair.econ.delta - pair.econ.tech.df(tr.K[-1]), abs=1e-6)


def test_convergence_rate_matches_stability(path):
    pair, _, tr = path
    e = pair.econ
    # K' ~ (f' - sigma')(K - kbar) with sigma = 1/v', so the rate is f' + v''/v'^2
    lam = og.stability_closed_form(e, pair.kbar)
    rate = ph.convergence_rate(tr)
    assert rate == pytest.approx(lam, rel=1e-3)


def test_saddle_matches_policy(solved):
    pair, pol = solved[0.25]
    e = pair.econ
    K0 = 0.9 * pair.kbar
    sad = ph.simulate_saddle(e, pair.kbar, K0, n_out=201)
    C_pol = pol(sad.K)
    assert np.max(np.abs(sad.C - C_pol)) < 1e-8 * e.tech.f(pair.kbar)
    assert np.max(np.abs(sad.W - pair.unborn(sad.K))) < 1e-7


def test_forward_autonomous_leaves_manifold(solved):
    # the transverse direction is unstable forward in time: a path started on
    # the manifold drifts off it well before reaching kbar
    pair, pol = solved[0.5]
    e = pair.econ
    K0 = 0.9 * pair.kbar
    C0, W0 = float(pol(K0)), float(pair.unborn(K0))
    try:
        tr = ph.simulate_autonomous(e, K0, C0, W0, 200.0, n_out=401)
        gap = np.max(np.abs(tr.C - pol(np.clip(tr.K, *pol.domain))))
    except (ph.DomainExit, ph.SingularDrift, ValueError):
        gap = np.inf
    assert gap > 1e-6


def test_saddle_rejects_upper_start(econ, interval):
    with pytest.raises(ValueError):
        ph.simulate_saddle(econ, interval.at(0.5), interval.at(0.6))


def test_domain_exit(solved):
    pair, pol = solved[0.5]
    with pytest.raises(ph.DomainExit):
        ph.simulate_policy(pol, pair, pair.econ.tech, pol.domain[1] + 1.0, 10.0)


def test_steady_state_point(econ, interval):
    kb = interval.at(0.5)
    _, f, W = ph.steady_state_point(econ, kb)
    assert W == pytest.approx(og.boundary_values(econ, kb)[1], rel=1e-13)
    assert np.allclose(ph.autonomous_rhs(econ, kb, f * (1 - 1e-6), W)[0], econ.tech.f(kb) * 1e-6)
