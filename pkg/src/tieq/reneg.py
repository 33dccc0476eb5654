"""Two-argument value V(k0, kbar) over the family of equilibria, the local
renegotiation test, and selection of the surviving steady state."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .flow import integrate_flow, value_functional, DivergedPolicy
from .model import OgEconomy
from . import ogsolver as og


# differences of V across kbar need flows well below the default tolerance
FLOW_RTOL = 1e-12
FLOW_ATOL = 1e-12


@dataclass
class ValueSurface:
    kbar: np.ndarray
    k0: np.ndarray            # shape (len(kbar), m): k0 points per kbar
    V: np.ndarray             # same shape, NaN where the run failed
    errors: dict = field(default_factory=dict)
    domains: dict = field(default_factory=dict)

    def diagonal_error(self, econ):
        """max |V(kbar, kbar) - BC1| over rows whose k0 grid contains kbar."""
        out = 0.0
        for i, kb in enumerate(self.kbar):
            j = np.flatnonzero(self.k0[i] == kb)
            if j.size:
                out = max(out, abs(self.V[i, j[0]] - og.boundary_values(econ, kb)[0]))
        return out


def _row(args):
    econ, kb, k0s = args
    try:
        pair, pol = og.solve_value_pair(econ, kb)
    except og.SolverError as exc:
        return np.full(len(k0s), np.nan), repr(exc), None
    lo, hi = pair.domain
    out = np.full(len(k0s), np.nan)
    err = None
    for j, k0 in enumerate(k0s):
        if not lo <= k0 <= hi:
            err = f"k0={k0:.6g} outside [{lo:.6g}, {hi:.6g}]"
            continue
        try:
            fr = integrate_flow(pol, econ.tech, k0, breakpoints=econ.kernel.breakpoints(),
                                rtol=FLOW_RTOL, atol=FLOW_ATOL)
            out[j] = value_functional(pol, econ.tech, econ.kernel, econ.utility, k0, flow=fr)
        except DivergedPolicy:
            # stability ~ 0 near the top of I: the flow crawls, use the solved v
            out[j] = float(pair.value(k0))
    return out, err, (lo, hi)


def value_surface(econ: OgEconomy, kbars, k0s, workers=1) -> ValueSurface:
    """V(k0, kbar) by integrating utility along each kbar's solved policy.

    k0s: a 1-d grid shared by all kbar, or a 2-d array with one row per kbar.
    Failures leave NaN and are recorded per kbar.
    """
    kbars = np.asarray(kbars, dtype=float)
    k0s = np.asarray(k0s, dtype=float)
    if k0s.ndim == 1:
        k0s = np.broadcast_to(k0s, (len(kbars), len(k0s))).copy()
    I = og.steady_state_interval(econ)
    jobs = [(econ, kb, row) for kb, row in zip(kbars, k0s)]
    surf = ValueSurface(kbars, k0s, np.full(k0s.shape, np.nan))
    bad = [i for i, kb in enumerate(kbars) if not I.contains(kb)]
    for i in bad:
        surf.errors[float(kbars[i])] = "kbar outside the steady-state interval"
    todo = [i for i in range(len(kbars)) if i not in bad]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_row, [jobs[i] for i in todo]))
    else:
        rows = [_row(jobs[i]) for i in todo]
    for i, (vals, err, dom) in zip(todo, rows):
        surf.V[i] = vals
        if err:
            surf.errors[float(kbars[i])] = err
        if dom:
            surf.domains[float(kbars[i])] = dom
    return surf


def renegotiation_derivative(econ: OgEconomy, kbar) -> float:
    """dV/dkbar on the diagonal: (1/f)((pi+rho)/(rho(pi+delta)) f' - 1)."""
    d, r, p = econ.delta, econ.rho, econ.pi
    return ((p + r) / (r * (p + d)) * econ.tech.df(kbar) - 1.0) / econ.tech.f(kbar)


def renegotiation_derivative_fd(econ: OgEconomy, kbar, h=0.02):
    """One-sided second-order difference of V(kbar, .) at kbar.

    Steps go up in kbar so that k0 = kbar stays on the left (unique) branch of
    each neighbour's policy; V(kbar, kbar) itself is the boundary value.
    Higher derivatives of V grow as f'(kbar) -> delta, so the step shrinks to
    1% of the distance to the lower end of I there.
    """
    h = min(h, 0.01 * (kbar - og.steady_state_interval(econ).k_lo))
    v0 = og.boundary_values(econ, kbar)[0]
    s = value_surface(econ, [kbar + h, kbar + 2 * h], [kbar])
    if s.errors:
        raise og.SolverError(str(s.errors))
    v1, v2 = s.V[:, 0]
    return (-3 * v0 + 4 * v1 - v2) / (2 * h)


def initial_derivative_fd(econ: OgEconomy, kbar, h=1e-3):
    """dV/dk0 at the diagonal from flows on the left of kbar (should be 1/f)."""
    s = value_surface(econ, [kbar], [kbar - 2 * h, kbar - h, kbar])
    v2, v1, v0 = s.V[0]
    return (3 * v0 - 4 * v1 + v2) / (2 * h)


def dominates(econ: OgEconomy, k0, kbar, step=0.1):
    """(V(k0, kbar + step), V(k0, kbar)): nearby equilibrium vs incumbent."""
    s = value_surface(econ, [kbar + step, kbar], [k0])
    if s.errors:
        raise og.SolverError(str(s.errors))
    return float(s.V[0, 0]), float(s.V[1, 0])


def lrp_select(econ: OgEconomy) -> float:
    """Steady state with f'(kbar) = rho (pi + delta)/(pi + rho)."""
    return og.lrp_capital(econ)


def lrp_sweep(econ: OgEconomy, rhos=(0.02, 0.01, 0.005)):
    """[(rho, kbar*, f'(kbar*))] along a sequence of planner rates."""
    out = []
    for r in rhos:
        e = econ.with_(rho=r)
        k = lrp_select(e)
        out.append((r, k, float(e.tech.df(k))))
    return out
