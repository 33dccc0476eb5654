"""Time-domain paths of (K, C, W): policy-driven and via the autonomous system.

The C- and W-equations carry the factor C/(f - C), a 0/0 at the steady state.
Close to it (|f - C| < SWITCH_TOL * C) the drift is replaced by its limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import OgEconomy

SWITCH_TOL = 1e-7
STOP_TOL = 1e-9


class SingularDrift(RuntimeError):
    pass


class DomainExit(RuntimeError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclass
class Trajectory:
    t: np.ndarray
    K: np.ndarray
    C: np.ndarray
    W: np.ndarray
    provenance: str = "policy"       # "policy" | "autonomous"
    kbar: float | None = None
    stopped_early: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.K <= 0) or np.any(self.C <= 0):
            raise ValueError("K and C must stay positive")

    def terminal(self):
        return float(self.K[-1]), float(self.C[-1]), float(self.W[-1])


def steady_state_point(econ: OgEconomy, kbar: float):
    """(kbar, f(kbar), W_bar) with W_bar = pi ln f / (rho (delta + pi))."""
    f = econ.tech.f(kbar)
    return kbar, f, econ.pi * math.log(f) / (econ.rho * (econ.delta + econ.pi))


def _gap_term(econ, K, C, W):
    # (C/(f - C)) (pi ln C - rho (pi + delta) W)
    return C / (econ.tech.f(K) - C) * (econ.pi * np.log(C) - econ.rho * (econ.pi + econ.delta) * W)


def autonomous_rhs(econ: OgEconomy, K, C, W, limit=None):
    """(dK, dC, dW). `limit` replaces dC/C when f - C is numerically zero."""
    d, r, p = econ.delta, econ.rho, econ.pi
    f, fp = econ.tech.f(K), econ.tech.df(K)
    dK = f - C
    if limit is not None:
        gC = limit
    elif d == r:
        gC = fp - d
    else:
        gC = fp - d - (d - r) * p / d - (d - r) / d * _gap_term(econ, K, C, W)
    dW = -(p * (f - C) / C + p * np.log(C) - r * (p + d) * W) / d
    return dK, C * gC, dW


def simulate_autonomous(econ: OgEconomy, K0, C0, W0, T, n_out=401, rtol=1e-10, atol=1e-12):
    """Forward integration of the (K, C, W) system.

    Stops early (flagged) once |f(K) - C| < STOP_TOL * C. Off the equilibrium
    manifold the run is only a diagnostic: nothing pins W0 there.
    """
    if not (K0 > 0 and C0 > 0):
        raise ValueError("K0 and C0 must be positive")
    if econ.tech.f(K0) == C0 and econ.delta != econ.rho:
        raise SingularDrift("f(K0) == C0: drift undefined")
    s0 = np.sign(econ.tech.f(K0) - C0)

    def rhs(t, y):
        K, C, W = y
        if K <= 0 or C <= 0:
            return [0.0, 0.0, 0.0]
        gap = econ.tech.f(K) - C
        lim = None
        if abs(gap) < SWITCH_TOL * C:
            lim = 0.0          # on the manifold dC/C vanishes with f - C
        elif np.sign(gap) != s0 and econ.delta != econ.rho:
            raise SingularDrift(f"f - C changed sign at t={t:.6g}")
        return list(autonomous_rhs(econ, K, C, W, lim))

    def close(t, y):
        return abs(econ.tech.f(y[0]) - y[1]) - STOP_TOL * y[1]
    close.terminal = True

    sol = solve_ivp(rhs, (0.0, T), [K0, C0, W0], method="LSODA", rtol=rtol, atol=atol,
                    dense_output=True, events=close)
    if sol.status < 0:
        raise SingularDrift(sol.message)
    te = float(sol.t[-1])
    t = np.linspace(0.0, te, n_out)
    K, C, W = sol.sol(t)
    return Trajectory(t, K, C, W, "autonomous", None, sol.status == 1, {"t_end": te})


def simulate_saddle(econ: OgEconomy, kbar, K0, n_out=401, h0=None, rtol=1e-11, atol=1e-13):
    """Saddle path into kbar through K0, from the autonomous system.

    Forward integration from (K0, C0, W0) is useless: the direction transverse
    to the equilibrium manifold grows like 1/(f - C)^2 near the steady state.
    Instead start on the manifold close to kbar (invariant-curve series, or the
    linear saddle slope when rho == delta) and integrate backward in time until
    K = K0; the transverse mode decays in that direction. Time is shifted so
    that K(0) = K0. Only K0 < kbar is supported (the branch is unique there).
    """
    from . import ogsolver as og
    if not K0 < kbar:
        raise ValueError("saddle path is built from below kbar")
    d, r, p = econ.delta, econ.rho, econ.pi
    f = econ.tech.f
    if econ.time_consistent:
        h = -(h0 or 1e-4 * (1.0 + kbar))
        fb, fpp = f(kbar), econ.tech.d2f(kbar)
        a = (d - math.sqrt(d * d - 4.0 * fb * fpp)) / (2.0 * fb)
        vb, wb = og.boundary_values(econ, kbar)
        x = a * h
        W = wb + p / fb / (d + p - fb * a) * h
    else:
        xc, vc = og.invariant_series(econ, kbar)
        reach = og.series_reach(xc, og.SERIES_TOL, kbar - K0)
        h = -(h0 or min(0.5 * reach, 0.01 * kbar, 0.5 * (kbar - K0)))
        sp = og._SeriesPiece(xc, vc, abs(h))
        v, x, _ = (float(z[0]) for z in sp.eval(np.array([h])))
        W = (d * v - math.log(f(kbar + h)) - (x - math.log1p(x))) / (d - r)
    K1 = kbar + h
    C1 = f(K1) / (1.0 + x)

    def rhs(t, y):
        return list(autonomous_rhs(econ, *y))

    def hit(t, y):
        return y[0] - K0
    hit.terminal = True

    sol = solve_ivp(rhs, (0.0, -1e5), [K1, C1, W], method="LSODA", rtol=rtol, atol=atol,
                    dense_output=True, events=hit)
    if sol.status != 1:
        raise SingularDrift(f"backward run did not reach K0: {sol.message}")
    tb = -float(sol.t[-1])
    t = np.linspace(0.0, tb, n_out)
    K, C, W = sol.sol(t - tb)
    return Trajectory(t, K, C, W, "autonomous", kbar, False,
                      {"t_end": tb, "start_offset": h})


def simulate_policy(policy, pair, tech, K0, T, n_out=401, rtol=1e-11, atol=1e-12):
    """K' = f(K) - sigma(K), C = sigma(K), W = w(K)."""
    lo, hi = policy.domain
    if not lo <= K0 <= hi:
        raise DomainExit(f"K0={K0} outside [{lo}, {hi}]")

    def rhs(t, y):
        return [tech.f(y[0]) - policy(y[0])]

    def leave(t, y):
        return min(y[0] - lo, hi - y[0]) + 1e-12
    leave.terminal = True

    t = np.linspace(0.0, T, n_out)
    if policy.kbar is not None and K0 == policy.kbar:
        K = np.full_like(t, K0)
    else:
        sol = solve_ivp(rhs, (0.0, T), [K0], method="RK45", rtol=rtol, atol=atol,
                        dense_output=True, events=leave)
        if sol.status == 1:
            raise DomainExit(f"left the policy domain at t={sol.t[-1]:.6g}",
                             last=(float(sol.t[-1]), float(sol.y[0, -1])))
        if sol.status < 0:
            raise DomainExit(sol.message)
        K = sol.sol(t)[0]
    C = np.asarray(policy(K), dtype=float)
    W = np.asarray(pair.unborn(K), dtype=float)
    tr = Trajectory(t, K, C, W, "policy", policy.kbar)
    tr.info["dK"] = tech.f(K) - C
    tr.info["dC"] = policy.deriv(K) * tr.info["dK"]
    tr.info["dW"] = pair._w(K, 1) * tr.info["dK"]
    return tr


def psi_path(traj: Trajectory, econ: OgEconomy):
    """psi(t); where f - C is numerically zero the limit delta - f'(K) is used."""
    d, r, p = econ.delta, econ.rho, econ.pi
    K, C, W = traj.K, traj.C, traj.W
    if d == r:
        return np.zeros_like(K)
    gap = econ.tech.f(K) - C
    near = np.abs(gap) < SWITCH_TOL * C
    safe = np.where(near, 1.0, gap)
    term = C / safe * (p * np.log(C) - r * (p + d) * W)
    psi = -(d - r) * p / d - (d - r) / d * term
    return np.where(near, d - econ.tech.df(K), psi)


def residual_autonomous(traj: Trajectory, econ: OgEconomy, min_gap=1e-5):
    """Residuals of the C- and W-equations along a policy-driven path.

    Points with |f - C| < min_gap * C are skipped (NaN): the 0/0 there only
    measures rounding.
    """
    if "dC" not in traj.info:
        raise ValueError("need a policy-driven trajectory")
    K, C, W = traj.K, traj.C, traj.W
    ok = np.abs(econ.tech.f(K) - C) >= min_gap * C
    rC = np.full_like(K, np.nan)
    rW = np.full_like(K, np.nan)
    _, dC, dW = autonomous_rhs(econ, K[ok], C[ok], W[ok])
    rC[ok] = traj.info["dC"][ok] / C[ok] - dC / C[ok]
    rW[ok] = traj.info["dW"][ok] - dW
    return rC, rW


def convergence_rate(traj: Trajectory, band=(1e-7, 1e-4)):
    """Slope of ln|K - kbar| in t over the part of the run where the relative
    gap |K - kbar|/(1 + kbar) lies inside `band` (the linear regime)."""
    e = np.abs(traj.K - traj.kbar) / (1.0 + traj.kbar)
    m = (e > band[0]) & (e < band[1])
    if m.sum() < 5:
        raise ValueError("run does not cover the linear regime; lengthen it")
    return float(np.polyfit(traj.t[m], np.log(e[m]), 1)[0])
