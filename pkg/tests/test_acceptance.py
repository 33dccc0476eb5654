"""Acceptance criteria 1-8. Each test prints a single PASS/FAIL line."""
import filecmp
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from tieq import cli
from tieq import flow as fl
from tieq import fiscal as fs
from tieq import ogsolver as og
from tieq import oracle as orc
from tieq import phase as ph
from tieq import reneg as rn
from tieq.model import Exponential, Linear, OgEconomy

SCEN = Path(__file__).resolve().parents[1] / "scripts" / "scenarios"


def fmt(x):
    return f"{x:.3e}"


def test_criterion_1_linear_oracle(criterion):
    t0 = time.perf_counter()
    case = orc.LinearCase(1.0, 0.10, 0.05, 1.0)
    sol = orc.solve_linear_de(case)
    target = case.delta0 / (1 + (case.delta0 - case.delta1) / case.delta1 * math.exp(-case.delta1 * case.tau))
    rel = abs(sol.slope - target) / target
    dt = time.perf_counter() - t0
    print(f"slope {sol.slope:.8f} target {target:.8f} rel {fmt(rel)}")
    criterion("criterion 1 (linear oracle)", {
        f"slope rel err {fmt(rel)} <= 1e-6": rel <= 1e-6,
        f"target ~ 0.051250 ({target:.6f})": abs(target - 0.051250) < 5e-7,
    }, dt, 5)


def test_criterion_2_constant_discount(criterion):
    t0 = time.perf_counter()
    ker = Exponential(0.10)
    pol, tech = fl.LinearPolicy(0.051250), Linear(1.0)
    rates = np.array([fl.effective_discount_rate(pol, tech, ker, k=k) for k in np.linspace(0.2, 20, 50)])
    e_rate = np.max(np.abs(rates - 0.10))

    econ = OgEconomy.make(rho=0.06)
    pair, sigma = og.solve_value_pair(econ)
    tr = ph.simulate_policy(sigma, pair, econ.tech, 0.8 * pair.kbar, 300.0, n_out=601)
    e_euler = np.max(np.abs(orc.euler_residual(tr, econ.tech, econ.delta)))
    dt = time.perf_counter() - t0
    criterion("criterion 2 (constant-discount reduction)", {
        f"effective rate err {fmt(e_rate)} <= 1e-8": e_rate <= 1e-8,
        f"Euler residual {fmt(e_euler)} <= 1e-5": e_euler <= 1e-5,
    }, dt, 10)


@pytest.fixture(scope="module")
def canonical():
    t0 = time.perf_counter()
    econ = OgEconomy.make()
    I = og.steady_state_interval(econ)
    out = [(frac, *og.solve_value_pair(econ, I.at(frac))) for frac in (0.25, 0.5, 0.75)]
    return econ, I, out, time.perf_counter() - t0


def test_criterion_3_equilibrium_certificate(criterion, canonical):
    econ, I, pairs, t_solve = canonical
    t0 = time.perf_counter()
    checks = {f"I ~ (9.97, 23.06): ({I.k_lo:.3f}, {I.k_hi:.3f})":
              abs(I.k_lo - 9.97) < 0.01 and abs(I.k_hi - 23.06) < 0.03}
    for frac, pair, pol in pairs:
        ks = np.linspace(*pol.domain, 20)
        ie = np.max(np.abs(fl.ie_residual(pol, econ.tech, econ.kernel, econ.utility, ks, pair.value)))
        de = np.max(np.abs(fl.de_residual(pol, econ.tech, econ.kernel, econ.utility, ks,
                                          pair.value, pair.dvalue)))
        cells = 0.0
        for k in ks:
            c, w = fl.payoff_argmax(pol, econ.tech, econ.kernel, econ.utility, k, n=1000)
            cells = max(cells, abs(c - float(pol(k))) / w)
        tag = f"kbar={pair.kbar:.3f}"
        checks[f"{tag} IE {fmt(ie)} <= 1e-5"] = ie <= 1e-5
        checks[f"{tag} DE {fmt(de)} <= 1e-5"] = de <= 1e-5
        checks[f"{tag} argmax offset {cells:.2f} <= 1 cell"] = cells <= 1.0
        print(f"{tag}: IE {fmt(ie)} DE {fmt(de)} argmax cells {cells:.2f}")
    dt = t_solve + time.perf_counter() - t0
    criterion("criterion 3 (equilibrium certificate)", checks, dt, 60)


def test_criterion_4_multiplicity_stability(criterion, canonical):
    econ, I, pairs, _ = canonical
    checks = {}
    for i in range(3):
        for j in range(i + 1, 3):
            (_, pa, sa), (_, pb, sb) = pairs[i], pairs[j]
            lo = max(sa.domain[0], sb.domain[0])
            hi = min(sa.domain[1], sb.domain[1])
            k = np.linspace(lo, hi, 400)
            diff = np.max(np.abs(sa(k) - sb(k)))
            scale = 1e-3 * econ.tech.f(max(pa.kbar, pb.kbar))
            checks[f"policies {i},{j} differ by {fmt(diff)} > {fmt(scale)}"] = diff > scale
    for _, pair, _ in pairs:
        try:
            closed, num = og.stability_test(econ, pair, pair.kbar)
            rel = abs(num - closed) / abs(closed)
        except og.DiagnosticsError as exc:
            closed, rel = og.stability_closed_form(econ, pair.kbar), math.inf
        print(f"kbar={pair.kbar:.3f}: stability {closed:.6e} rel diff {fmt(rel)}")
        checks[f"kbar={pair.kbar:.3f} stability {closed:.3e} < 0"] = closed < 0
        checks[f"kbar={pair.kbar:.3f} closed vs numerical {fmt(rel)} <= 1e-3"] = rel <= 1e-3
    criterion("criterion 4 (multiplicity and stability)", checks)


def test_criterion_5_renegotiation(criterion):
    econ = OgEconomy.make()
    I = og.steady_state_interval(econ)
    ks = np.linspace(I.k_lo, I.k_hi, 14)[1:-1]
    closed = np.array([rn.renegotiation_derivative(econ, k) for k in ks])
    fd = np.array([rn.renegotiation_derivative_fd(econ, k) for k in ks])
    agree = np.max(np.abs(fd / closed - 1))
    pairs = [(0.2, 0.0), (0.4, -0.5), (0.5, -1.0), (0.7, -0.05), (0.9, -2.0)]
    wins = []
    for frac, dk0 in pairs:
        kb = I.at(frac)
        hi, lo = rn.dominates(econ, kb + dk0, kb, step=0.1)
        wins.append(hi > lo)
    k_star = rn.lrp_select(econ)
    e_lrp = abs(econ.tech.df(k_star) - econ.rho * (econ.pi + econ.delta) / (econ.pi + econ.rho))
    sweep = rn.lrp_sweep(econ, (0.02, 0.01, 0.005))
    fps = [fp for _, _, fp in sweep]
    print("rho sweep f'(k*):", ", ".join(f"{fp:.6f}" for fp in fps))
    criterion("criterion 5 (renegotiation selection)", {
        f"closed-form derivative > 0 on interior (min {closed.min():.3e})": bool(np.all(closed > 0)),
        f"finite-difference derivative > 0 (min {fd.min():.3e})": bool(np.all(fd > 0)),
        f"closed vs FD rel {fmt(agree)} <= 1e-3": agree <= 1e-3,
        f"V(k0, kbar+0.1) > V(k0, kbar) at {sum(wins)}/5 pairs": all(wins),
        f"f'(k*) err {fmt(e_lrp)} <= 1e-10": e_lrp <= 1e-10,
        "f'(k*) decreasing toward 0 along the rho sweep": all(a > b > 0 for a, b in zip(fps, fps[1:]))
        and fps[-1] < 0.5 * fps[0],
    })


def test_criterion_6_fiscal(criterion, canonical):
    econ, I, pairs, _ = canonical
    t0 = time.perf_counter()
    _, pair, pol = pairs[1]
    tr = ph.simulate_policy(pol, pair, econ.tech, 0.8 * pair.kbar, 800.0, n_out=3201)
    psi = ph.psi_path(tr, econ)
    conv = abs(tr.K[-1] - pair.kbar) / pair.kbar
    e_psi = abs(psi[-1] - (econ.delta - econ.tech.df(pair.kbar)))

    sched = fs.tax_surface(tr, fs.allocation_rule(econ, "egalitarian"), econ)
    spread = float(np.ptp(sched.eta, axis=0).max())
    e_egal = float(np.max(np.abs(sched.eta[0] + sched.psi / sched.r)))

    etc = econ.with_(rho=econ.delta)
    tp, tpol = og.solve_value_pair(etc)
    ttr = ph.simulate_policy(tpol, tp, etc.tech, 0.8 * tp.kbar, 200.0)
    eta_tc = float(np.max(np.abs(fs.tax_surface(ttr, fs.allocation_rule(etc), etc).eta)))

    n_t = fs.cutoff_age(econ)
    k_star = og.lrp_capital(econ)
    n_num = fs.cutoff_age_numeric(econ, k_star)
    rule = fs.allocation_rule(econ)
    sign = fs.long_run_tax(econ, k_star, rule, n_t - 0.5) * fs.long_run_tax(econ, k_star, rule, n_t + 0.5) < 0

    eta_bar = fs.uniform_subsidy(econ)
    eta_model = fs.subsidy_at(econ, k_star)
    kM = fs.market_steady_state(econ)
    e_M = abs(fs.market_residual(econ, kM))
    fpM = econ.tech.df(kM)
    dt = time.perf_counter() - t0
    print(f"uniform subsidy formula {eta_bar:.6f} vs (delta - f')/f' at k* {eta_model:.6f}")
    print(f"k_M {kM:.6f} f'(k_M) {fpM:.6f} delta {econ.delta}")
    criterion("criterion 6 (fiscal layer)", {
        f"psi terminal err {fmt(e_psi)} within convergence {fmt(conv)}": e_psi <= max(conv, 1e-8),
        f"egalitarian tax age spread {fmt(spread)} and -psi/r err {fmt(e_egal)} ~ 0": spread < 1e-12 and e_egal < 1e-12,
        f"rho = delta gives |eta| {fmt(eta_tc)} ~ 0": eta_tc < 1e-12,
        f"cutoff age {n_t:.4f} ~ 15.27, numeric {n_num:.10f}, sign change": abs(n_t - 15.27) < 0.005
        and abs(n_num - n_t) < 1e-8 and sign,
        f"uniform subsidy {eta_bar:.10f} matches {eta_model:.10f} to 1e-10": abs(eta_bar - eta_model) <= 1e-10,
        f"market steady state residual {fmt(e_M)} <= 1e-10": e_M <= 1e-10,
        f"f'(k_M) = {fpM:.6f} < delta": fpM < econ.delta,
    }, dt, 30)


def test_criterion_7_invariants(criterion, canonical):
    econ, I, pairs, _ = canonical
    t0 = time.perf_counter()
    sg = env = cross = 0.0
    for _, pair, pol in pairs:
        lo = pol.domain[0]
        for s, t in [(1.0, 1.0), (5.0, 20.0), (30.0, 60.0)]:
            sg = max(sg, fl.semigroup_error(pol, econ.tech, lo, s, t))
        for k in np.linspace(*pol.domain, 7):
            J = fl.marginal_value(pol, econ.tech, econ.kernel, econ.utility, k)
            d = float(pair.dvalue(k))
            env = max(env, abs(J - d) / abs(d))
        kd, sd = og.solve_desingularized(econ, pair.kbar, lo + 0.05 * (pair.kbar - lo))
        m = kd < pair.kbar * 0.99
        cross = max(cross, float(np.max(np.abs(sd[m] - pol(kd[m])) / sd[m])))
    norm = max(fs.aggregation_error(fs.allocation_rule(e)) for e in
               (econ, econ.with_(rho=0.005), econ.with_(pi=0.01), econ.with_(rho=econ.delta)))
    _, pair, pol = pairs[1]
    tr = ph.simulate_policy(pol, pair, econ.tech, 0.8 * pair.kbar, 400.0, n_out=1601)
    rule = fs.allocation_rule(econ)
    foc = float(np.max(np.abs(fs.foc_residual(tr, rule, econ, fs.tax_surface(tr, rule, econ)))))
    dt = time.perf_counter() - t0
    criterion("criterion 7 (structural invariants)", {
        f"semigroup {fmt(sg)} <= 1e-8": sg <= 1e-8,
        f"normalization {fmt(norm)} <= 1e-10": norm <= 1e-10,
        f"envelope {fmt(env)} <= 1e-4": env <= 1e-4,
        f"cross-solver {fmt(cross)} <= 1e-4": cross <= 1e-4,
        f"FOC {fmt(foc)} <= 1e-4": foc <= 1e-4,
    }, dt, 60)


def _run_all(out):
    sc = str(SCEN / "canonical.toml")
    codes = [cli.main([cmd, "--scenario", sc, "--out", out])
             for cmd in ("solve", "simulate", "fiscal", "sweep")]
    return codes


def _csvs(root):
    out = []
    for d, _, files in os.walk(root):
        out += [os.path.relpath(os.path.join(d, f), root) for f in files if f.endswith(".csv")]
    return sorted(out)


def test_criterion_8_determinism(criterion, tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    ca, cb = _run_all(a), _run_all(b)
    fa, fb = _csvs(a), _csvs(b)
    same = fa == fb and all(filecmp.cmp(os.path.join(a, f), os.path.join(b, f), shallow=False) for f in fa)
    print(f"{len(fa)} CSV files compared")
    criterion("criterion 8 (determinism)", {
        f"all commands exit 0 ({ca}, {cb})": ca == cb == [0, 0, 0, 0],
        f"{len(fa)} CSV artifacts byte-identical": same and len(fa) >= 5,
    })
