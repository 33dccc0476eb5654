"""Command line: solve | simulate | verify | fiscal | sweep | oracle.

Exit codes: 0 everything passed, 2 partial success, 1 hard failure.
Floats are written with 17 significant digits; row order is fixed, so two
runs of one scenario give byte-identical CSV files.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import fiscal as fs
from . import flow as fl
from . import ogsolver as og
from . import oracle as orc
from . import phase as ph
from . import reneg as rn
from .config import Scenario, ScenarioError, load_scenario, scenario_from_dict
from .flow import PolicyFunction
from .model import Exponential, Linear, LogUtility

SCHEMA_VERSION = 1
POLICY_COLUMNS = ["k", "sigma", "v", "w", "v_prime", "w_prime", "ie_residual", "de_residual"]
VALUEPAIR_COLUMNS = ["k", "v", "w", "v_prime", "w_prime", "x"]
TRAJECTORY_COLUMNS = ["t", "K", "C", "W", "psi", "residual_autonomous"]
SURFACE_COLUMNS = ["kbar", "f_prime", "status", "v_diagonal", "reneg_derivative",
                   "reneg_derivative_fd", "stability", "lrp"]

OK, PARTIAL, FAIL = 0, 2, 1


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path):
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return {h: data[:, i] for i, h in enumerate(head)}


def _clean(obj):
    # JSON without NaN/inf tokens and with plain floats
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest(sc: Scenario, command, runs, started, **extra):
    return {"schema_version": SCHEMA_VERSION, "tool_version": __version__, "command": command,
            "scenario": sc.name, "scenario_hash": sc.digest, "runs": runs,
            "wall_clock_s": round(time.time() - started, 3), **extra}


# ------------------------------------------------------------------ steady-state selection

def select_kbars(sc: Scenario, econ, override=None):
    """[(label, kbar)] for the scenario's run selection."""
    if override is not None:
        return [("kbar_00", float(override))]
    if econ.time_consistent:
        return [("kbar_00", og.golden_rule_capital(econ))]
    if sc.run.select == "lrp":
        return [("kbar_00", rn.lrp_select(econ))]
    if sc.run.select == "fractions":
        I = og.steady_state_interval(econ)
        return [(f"kbar_{i:02d}", I.at(f)) for i, f in enumerate(sc.run.fractions)]
    if not sc.run.kbar:
        raise ScenarioError("[run] select = 'list' needs a non-empty kbar list")
    return [(f"kbar_{i:02d}", float(k)) for i, k in enumerate(sc.run.kbar)]


def solve_one(econ, kbar, sc: Scenario):
    s = sc.solver
    omega = (s.omega_lo * kbar, s.omega_hi * kbar)
    return og.solve_value_pair(econ, None if econ.time_consistent else kbar, omega,
                               eps=s.eps or None, n_grid=s.n_grid, rtol=s.rtol, atol=s.atol)


# ------------------------------------------------------------------ verification

def verify_policy(econ, pol, value, dvalue, cfg, kernel=None):
    """IE / DE residuals, envelope error, P1 argmax offsets and semigroup error
    on cfg.n_check points of the policy domain. Returns a report dict; a flow
    that diverges marks its check as failed instead of aborting."""
    kernel = kernel or econ.kernel
    tech, u = econ.tech, econ.utility
    lo, hi = pol.domain
    ks = np.linspace(lo, hi, cfg.n_check)
    report, errors = {}, {}

    def run(name, tol, fn):
        try:
            val = float(fn())
        except (fl.DivergedPolicy, fl.DegenerateValue) as exc:
            val = math.inf
            errors[name] = str(exc)
        report[name] = {"value": val, "tol": tol, "pass": bool(val <= tol)}

    def envelope():
        return max(abs(fl.marginal_value(pol, tech, kernel, u, k) - float(dvalue(k))) / abs(float(dvalue(k)))
                   for k in ks)

    def cells():
        out = 0.0
        for k in ks:
            c, w = fl.payoff_argmax(pol, tech, kernel, u, k, n=cfg.n_c)
            out = max(out, abs(c - float(pol(k))) / w)
        return out

    run("ie_residual", cfg.ie_tol,
        lambda: np.max(np.abs(fl.ie_residual(pol, tech, kernel, u, ks, value))))
    run("de_residual", cfg.de_tol,
        lambda: np.max(np.abs(fl.de_residual(pol, tech, kernel, u, ks, value=value, dvalue=dvalue))))
    run("envelope", cfg.envelope_tol, envelope)
    run("argmax_cells", cfg.argmax_cells, cells)
    run("semigroup", cfg.semigroup_tol, lambda: fl.semigroup_error(pol, tech, lo, 10.0, 20.0))
    if kernel.lead_rate and len(kernel.pieces()) == 1:
        def spread():
            rates = [fl.effective_discount_rate(pol, tech, kernel, u, k) for k in ks]
            return np.max(rates) - np.min(rates)
        run("effective_discount_constant", 1e-8, spread)
    failing = [name for name, r in report.items() if not r["pass"]]
    return {"pass": not failing, "failing": failing, "checks": report, "errors": errors,
            "points": ks.tolist()}


# ------------------------------------------------------------------ solve

def _solve_job(args):
    sc, label, kbar = args
    econ = sc.economy_obj()
    try:
        pair, pol = solve_one(econ, kbar, sc)
    except og.InadmissibleSteadyState as exc:
        return label, kbar, "inadmissible", str(exc), None
    except (og.SolverError, ValueError) as exc:
        return label, kbar, "failed", str(exc), None
    lo, hi = pair.domain
    ks = np.linspace(lo, hi, sc.solver.n_out)
    if pair.kbar not in ks:
        ks = np.sort(np.append(ks, pair.kbar))
    rep = verify_policy(econ, pol, pair.value, pair.dvalue, sc.verify)
    ie = fl.ie_residual(pol, econ.tech, econ.kernel, econ.utility, ks, pair.value)
    de = fl.de_residual(pol, econ.tech, econ.kernel, econ.utility, ks,
                        value=pair.value, dvalue=pair.dvalue)
    rows = np.column_stack([ks, pol(ks), pair.value(ks), pair.unborn(ks), pair.dvalue(ks),
                            pair._w(ks, 1), ie, de])
    vp = np.column_stack([pair.k, pair.v, pair.w, pair.dv, pair.dw, pair.x])
    info = {"kbar": pair.kbar, "domain": [lo, hi], "series_reach": pair.info.get("series_reach"),
            "eps": pair.eps, "max_ie": float(np.max(np.abs(ie))), "max_de": float(np.max(np.abs(de))),
            "verification": rep}
    return label, pair.kbar, ("verified" if rep["pass"] else "unverified"), info, (rows, vp)


def cmd_solve(sc: Scenario, out, threads=1, kbar=None, allow_unverified=False):
    started = time.time()
    econ = sc.economy_obj()
    if isinstance(econ.tech, Linear):
        raise ScenarioError("solve needs a concave technology; use `oracle` for the linear case")
    sel = select_kbars(sc, econ, kbar)
    jobs = [(sc, label, k) for label, k in sel]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(threads) as ex:
            results = list(ex.map(_solve_job, jobs))
    else:
        results = [_solve_job(j) for j in jobs]
    runs = []
    for label, k, status, info, data in results:
        run = {"label": label, "kbar": k, "status": status}
        if data is None:
            run["error"] = info
        else:
            run.update({key: v for key, v in info.items() if key != "verification"})
            run["failing_checks"] = info["verification"]["failing"]
            if status == "verified" or allow_unverified:
                d = os.path.join(out, label)
                os.makedirs(d, exist_ok=True)
                write_csv(os.path.join(d, "policy.csv"), POLICY_COLUMNS, data[0])
                write_csv(os.path.join(d, "valuepair.csv"), VALUEPAIR_COLUMNS, data[1])
                write_json(os.path.join(d, "verification.json"), dict(info["verification"], kbar=k))
                run["written"] = True
            else:
                run["written"] = False
        runs.append(run)
    good = sum(r["status"] == "verified" or (allow_unverified and r.get("written")) for r in runs)
    code = OK if good == len(runs) else (PARTIAL if good else FAIL)
    write_json(os.path.join(out, "manifest.json"), manifest(sc, "solve", runs, started, exit_code=code))
    return code


# ------------------------------------------------------------------ simulate

def _trajectory(sc, econ, kbar=None, k0=None, horizon=None):
    k = select_kbars(sc, econ, kbar)[0][1]
    pair, pol = solve_one(econ, k, sc)
    k = pair.kbar
    K0 = sc.run.k0_frac * k if k0 is None else float(k0)
    T = sc.run.horizon if horizon is None else float(horizon)
    tr = ph.simulate_policy(pol, pair, econ.tech, K0, T, n_out=sc.run.n_time)
    return tr, pair, pol


def cmd_simulate(sc: Scenario, out, kbar=None, k0=None, horizon=None):
    started = time.time()
    econ = sc.economy_obj()
    try:
        tr, pair, pol = _trajectory(sc, econ, kbar, k0, horizon)
    except ph.DomainExit as exc:
        write_json(os.path.join(out, "manifest.json"),
                   manifest(sc, "simulate", [{"status": "domain_exit", "error": str(exc),
                                              "last_valid": exc.last}], started, exit_code=FAIL))
        return FAIL
    except (og.SolverError, ValueError) as exc:
        write_json(os.path.join(out, "manifest.json"),
                   manifest(sc, "simulate", [{"status": "failed", "error": str(exc)}], started,
                            exit_code=FAIL))
        return FAIL
    psi = ph.psi_path(tr, econ)
    rC, rW = ph.residual_autonomous(tr, econ)
    res = np.fmax(np.abs(rC), np.abs(rW))
    write_csv(os.path.join(out, "trajectory.csv"), TRAJECTORY_COLUMNS,
              np.column_stack([tr.t, tr.K, tr.C, tr.W, psi, res]))
    K, C, W = tr.terminal()
    run = {"kbar": tr.kbar, "K0": float(tr.K[0]), "horizon": float(tr.t[-1]), "status": "ok",
           "terminal": {"K": K, "C": C, "W": W, "psi": float(psi[-1]),
                        "psi_limit": econ.delta - float(econ.tech.df(tr.kbar)),
                        "K_gap": K - tr.kbar},
           "max_residual_autonomous": float(np.nanmax(res)) if np.any(np.isfinite(res)) else 0.0}
    write_json(os.path.join(out, "manifest.json"), manifest(sc, "simulate", [run], started, exit_code=OK))
    return OK


# ------------------------------------------------------------------ verify

def _load_policy(d, kbar):
    pc = read_csv(os.path.join(d, "policy.csv"))
    vp = read_csv(os.path.join(d, "valuepair.csv"))
    pol = PolicyFunction(pc["k"], pc["sigma"], kbar)
    from scipy.interpolate import CubicHermiteSpline
    v = CubicHermiteSpline(vp["k"], vp["v"], vp["v_prime"])
    return pol, v, v.derivative()


def _oracle_report(sc: Scenario):
    o = sc.oracle
    case = orc.LinearCase(o.A, o.delta0, o.delta1, o.tau)
    t0 = time.time()
    sol = orc.solve_linear_de(case)
    runtime = time.time() - t0
    ks = [0.5, 1.0, 2.0, 5.0, 10.0]
    de = orc.de_check(case, sol, ks)
    vs = orc.pin_varsigma(case, sol)
    ident = orc.hjb_example_residual(case, sol, vs, np.linspace(0.1, 50.0, 40))
    naive = fl.LinearPolicy(orc.naive_slope(case))
    hjb = orc.hjb_constant_discount_check(naive, case.tech, case.delta0, LogUtility(), ks)
    bad = fl.LinearPolicy(1.05 * orc.naive_slope(case))
    hjb_bad = orc.hjb_constant_discount_check(bad, case.tech, case.delta0, LogUtility(), ks)
    eff = [fl.effective_discount_rate(naive, case.tech, Exponential(case.delta0), LogUtility(), k)
           for k in ks]
    target = orc.equilibrium_slope(case)
    checks = {
        "de_solver_slope": (abs(sol.slope / target - 1.0), 1e-6),
        "de_residual": (float(np.max(np.abs(de))), 1e-8),
        "g_identity": (float(np.max(np.abs(ident))), 1e-8),
        "hjb_naive": (float(np.max(np.abs(hjb))), 1e-7),
        "effective_discount": (float(np.max(np.abs(np.array(eff) - case.delta0))), 1e-8),
        "runtime_s": (runtime, 5.0),
    }
    rep = {n: {"value": v, "tol": t, "pass": bool(v <= t)} for n, (v, t) in checks.items()}
    neg = float(np.min(np.abs(hjb_bad)))
    rep["hjb_detects_perturbation"] = {"value": neg, "tol": 1e-6, "pass": bool(neg > 1e-6),
                                       "direction": "above"}
    failing = [n for n, r in rep.items() if not r["pass"]]
    return {"pass": not failing, "failing": failing, "checks": rep,
            "slopes": {"naive": orc.naive_slope(case), "equilibrium": target,
                       "de_solver": sol.slope, "integrated_equation": orc.ie_slope(case)},
            "varsigma": vs}


def cmd_verify(sc: Scenario, out):
    started = time.time()
    econ = sc.economy_obj()
    if isinstance(econ.tech, Linear):
        rep = _oracle_report(sc)
        write_json(os.path.join(out, "verification.json"), rep)
        write_json(os.path.join(out, "manifest.json"),
                   manifest(sc, "verify", [{"status": "pass" if rep["pass"] else "fail"}], started))
        return OK if rep["pass"] else FAIL
    # later commands overwrite manifest.json, so find the solved runs on disk
    dirs = sorted(n for n in os.listdir(out) if n.startswith("kbar_")
                  and os.path.isdir(os.path.join(out, n))) if os.path.isdir(out) else []
    if not dirs:
        raise FileNotFoundError(f"no solve artifacts in {out}; run `solve` first")
    runs, reports = [], {}
    for label in dirs:
        d = os.path.join(out, label)
        meta = os.path.join(d, "verification.json")
        if not (os.path.exists(os.path.join(d, "policy.csv")) and os.path.exists(meta)):
            runs.append({"label": label, "status": "missing"})
            continue
        with open(meta, encoding="utf-8") as fh:
            kbar = json.load(fh).get("kbar")
        if kbar is None:
            runs.append({"label": label, "status": "missing"})
            continue
        pol, v, dv = _load_policy(d, kbar)
        rep = verify_policy(econ, pol, v, dv, sc.verify)
        reports[label] = rep
        runs.append({"label": label, "kbar": kbar,
                     "status": "pass" if rep["pass"] else "fail", "failing": rep["failing"]})
    write_json(os.path.join(out, "verification.json"), reports)
    n_ok = sum(r["status"] == "pass" for r in runs)
    code = OK if runs and n_ok == len(runs) else (PARTIAL if n_ok else FAIL)
    write_json(os.path.join(out, "verify_manifest.json"),
               manifest(sc, "verify", runs, started, exit_code=code))
    return code


# ------------------------------------------------------------------ fiscal

def cmd_fiscal(sc: Scenario, out, kbar=None, k0=None, horizon=None):
    started = time.time()
    econ = sc.economy_obj()
    rule = fs.allocation_rule(econ, sc.fiscal.variant)
    k_sel = select_kbars(sc, econ, kbar)[0][1]
    stationary = (not econ.time_consistent and sc.run.select == "lrp" and kbar is None)
    if stationary:
        # the l.r.p. steady state sits on the edge of I: use the stationary path
        T = sc.run.horizon if horizon is None else float(horizon)
        t = np.linspace(0.0, T, sc.run.n_time)
        Kb, Cb, Wb = ph.steady_state_point(econ, k_sel)
        tr = ph.Trajectory(t, np.full_like(t, Kb), np.full_like(t, Cb), np.full_like(t, Wb),
                           "policy", Kb)
    else:
        tr, _, _ = _trajectory(sc, econ, kbar, k0, horizon)
    ages = np.arange(0.0, sc.fiscal.age_max + 0.5 * sc.fiscal.age_step, sc.fiscal.age_step)
    sched = fs.tax_surface(tr, rule, econ, ages)
    nn, tt = np.meshgrid(sched.n, sched.t, indexing="ij")
    write_csv(os.path.join(out, "tax_surface.csv"), ["n", "t", "eta"],
              np.column_stack([nn.ravel(), tt.ravel(), sched.eta.ravel()]))
    k_star = rn.lrp_select(econ)
    n_tilde = fs.cutoff_age(econ) if not econ.time_consistent else None
    cert = None
    if n_tilde is not None:
        lo = float(fs.long_run_tax(econ, k_star, fs.allocation_rule(econ), n_tilde - 0.01))
        hi = float(fs.long_run_tax(econ, k_star, fs.allocation_rule(econ), n_tilde + 0.01))
        cert = {"eta_below": lo, "eta_above": hi, "sign_change": bool(lo * hi < 0)}
    k_m = fs.market_steady_state(econ)
    taus = np.asarray(sc.fiscal.taus, dtype=float)
    assets = sc.fiscal.assets or None
    ls = fs.lump_sum_present_values(tr, rule, econ, taus, assets)
    summary = {
        "kbar": tr.kbar, "variant": rule.variant,
        "eta_bar": fs.uniform_subsidy(econ),
        "eta_bar_at_lrp": fs.subsidy_at(econ, k_star),
        "n_tilde": n_tilde, "n_tilde_at_kbar": fs.cutoff_age_numeric(econ, tr.kbar, rule),
        "n_tilde_certificate": cert,
        "k_M": k_m, "k_M_residual": fs.market_residual(econ, k_m),
        "f_prime_k_M": float(econ.tech.df(k_m)),
        "psi_terminal": float(sched.psi[-1]),
        "psi_limit": econ.delta - float(econ.tech.df(tr.kbar)),
        "lump_sums": {"tau": ls.tau.tolist(), "b": ls.b.tolist(), "h": ls.h.tolist(),
                      "a": ls.a.tolist()},
        "normalization_error": fs.aggregation_error(rule),
    }
    write_json(os.path.join(out, "fiscal_summary.json"), summary)
    write_json(os.path.join(out, "manifest.json"),
               manifest(sc, "fiscal", [{"status": "ok", "kbar": tr.kbar}], started, exit_code=OK))
    return OK


# ------------------------------------------------------------------ sweep

def sweep_grid(econ, cfg):
    I = og.steady_state_interval(econ)
    inner = np.linspace(I.k_lo, I.k_hi, cfg.n_kbar + 2)[1:-1]
    extra = [I.k_lo * (1 - cfg.outside), I.k_hi * (1 + cfg.outside), I.k_hi]
    return np.sort(np.concatenate([inner, extra]))


def _sweep_row(args):
    sc, kb = args
    econ = sc.economy_obj()
    fp = float(econ.tech.df(kb))
    stab = og.stability_closed_form(econ, kb) if fp != econ.delta else -math.inf
    lrp = abs(fp - econ.lrp_marginal) <= 1e-12 * econ.lrp_marginal
    d_cf = rn.renegotiation_derivative(econ, kb)
    I = og.steady_state_interval(econ)
    if lrp:
        return [kb, fp, "boundary", og.boundary_values(econ, kb)[0], d_cf, math.nan, stab, 1]
    if not I.contains(kb):
        return [kb, fp, "inadmissible", math.nan, d_cf, math.nan, stab, 0]
    try:
        pair, pol = solve_one(econ, kb, sc)
        vd = fl.value_functional(pol, econ.tech, econ.kernel, econ.utility, pair.kbar)
        d_fd = rn.renegotiation_derivative_fd(econ, kb, sc.sweep.fd_step)
    except (og.SolverError, fl.DivergedPolicy, ValueError) as exc:
        return [kb, fp, "failed:" + type(exc).__name__, math.nan, d_cf, math.nan, stab, 0]
    return [kb, fp, "ok", vd, d_cf, d_fd, stab, 0]


def cmd_sweep(sc: Scenario, out, threads=1):
    started = time.time()
    econ = sc.economy_obj()
    grid = sweep_grid(econ, sc.sweep)
    jobs = [(sc, float(k)) for k in grid]
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    write_csv(os.path.join(out, "surface.csv"), SURFACE_COLUMNS, rows)
    failed = [r[0] for r in rows if str(r[2]).startswith("failed")]
    code = OK if not failed else (PARTIAL if len(failed) < len(rows) else FAIL)
    write_json(os.path.join(out, "manifest.json"),
               manifest(sc, "sweep", [{"rows": len(rows), "failed": failed}], started,
                        exit_code=code))
    return code


# ------------------------------------------------------------------ oracle

def cmd_oracle(sc: Scenario, out):
    started = time.time()
    rep = _oracle_report(sc)
    write_json(os.path.join(out, "oracle.json"), rep)
    write_json(os.path.join(out, "manifest.json"),
               manifest(sc, "oracle", [{"status": "pass" if rep["pass"] else "fail",
                                        "failing": rep["failing"]}], started))
    for name, r in rep["checks"].items():
        rel = ">" if r.get("direction") == "above" else "<="
        print(f"{'PASS' if r['pass'] else 'FAIL'} {name}: {r['value']:.3e} (need {rel} {r['tol']:.1e})")
    return OK if rep["pass"] else FAIL


# ------------------------------------------------------------------ entry point

def build_parser():
    p = argparse.ArgumentParser(prog="tieq", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["solve", "simulate", "verify", "fiscal", "sweep", "oracle"])
    p.add_argument("--scenario", help="TOML scenario file (defaults built in if omitted)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--k-bar", type=float, dest="k_bar")
    p.add_argument("--k0", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--allow-unverified", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario) if args.scenario else scenario_from_dict({}, "default")
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAIL
    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "solve":
            return cmd_solve(sc, args.out, args.threads, args.k_bar, args.allow_unverified)
        if args.command == "simulate":
            return cmd_simulate(sc, args.out, args.k_bar, args.k0, args.horizon)
        if args.command == "verify":
            return cmd_verify(sc, args.out)
        if args.command == "fiscal":
            return cmd_fiscal(sc, args.out, args.k_bar, args.k0, args.horizon)
        if args.command == "sweep":
            return cmd_sweep(sc, args.out, args.threads)
        return cmd_oracle(sc, args.out)
    except (ScenarioError, FileNotFoundError, og.SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAIL


if __name__ == "__main__":
    sys.exit(main())
