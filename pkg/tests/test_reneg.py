import numpy as np
import pytest

from tieq import reneg as rn
from tieq import ogsolver as og


def test_closed_form_sign(econ, interval):
    ks = np.linspace(interval.k_lo, interval.k_hi, 40)[1:-1]
    assert all(rn.renegotiation_derivative(econ, k) > 0 for k in ks)
    # vanishes exactly where f' hits the l.r.p. marginal product
    assert rn.renegotiation_derivative(econ, interval.k_hi) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("frac", [0.2, 0.6, 0.95])
def test_fd_matches_closed_form(econ, interval, frac):
    kb = interval.at(frac)
    fd = rn.renegotiation_derivative_fd(econ, kb)
    assert fd == pytest.approx(rn.renegotiation_derivative(econ, kb), rel=1e-3)


def test_value_surface_diagonal(econ, interval):
    kbs = [interval.at(0.3), interval.at(0.7)]
    surf = rn.value_surface(econ, kbs, np.array([[kbs[0] - 0.5, kbs[0]], [kbs[1] - 0.5, kbs[1]]]))
    assert not surf.errors
    assert surf.diagonal_error(econ) < 1e-10


def test_value_surface_flags_outside(econ, interval):
    surf = rn.value_surface(econ, [interval.k_hi + 1.0], [interval.k_hi])
    assert np.isnan(surf.V).all() and surf.errors


def test_initial_derivative(econ, interval):
    kb = interval.at(0.5)
    assert rn.initial_derivative_fd(econ, kb) == pytest.approx(1 / econ.tech.f(kb), rel=1e-5)


@pytest.mark.parametrize("frac,dk0", [(0.3, 0.0), (0.5, -0.5), (0.8, -0.05)])
def test_higher_steady_state_dominates(econ, interval, frac, dk0):
    kb = interval.at(frac)
    hi, lo = rn.dominates(econ, kb + dk0, kb)
    assert hi > lo


def test_lrp(econ):
    k = rn.lrp_select(econ)
    assert abs(econ.tech.df(k) - econ.lrp_marginal) < 1e-10
    out = rn.lrp_sweep(econ)
    fps = [fp for _, _, fp in out]
    assert all(a > b > 0 for a, b in zip(fps, fps[1:]))
