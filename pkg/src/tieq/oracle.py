"""Closed-form references: linear technology with log utility under the
piecewise-exponential kernel, and constant-discount HJB baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import (LinearPolicy, value_functional, remainder_utility, marginal_value,
                   de_residual)
from .model import Exponential, Linear, LogUtility, PiecewiseExponential


@dataclass(frozen=True)
class LinearCase:
    A: float = 1.0
    delta0: float = 0.10
    delta1: float = 0.05
    tau: float = 1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        PiecewiseExponential(self.delta0, self.delta1, self.tau)   # validates

    @property
    def kernel(self):
        return PiecewiseExponential(self.delta0, self.delta1, self.tau)

    @property
    def tech(self):
        return Linear(self.A)


def naive_slope(case: LinearCase) -> float:
    return case.delta0


def equilibrium_slope(case: LinearCase) -> float:
    d0, d1 = case.delta0, case.delta1
    return d0 / (1.0 + (d0 - d1) / d1 * math.exp(-d1 * case.tau))


def linear_naive_policy(case: LinearCase, k):
    return naive_slope(case) * np.asarray(k, dtype=float)


def linear_equilibrium_policy(case: LinearCase, k):
    return equilibrium_slope(case) * np.asarray(k, dtype=float)


def g_closed(case: LinearCase, k, varsigma):
    """(1/delta1) e^{-delta1 tau} ln k + varsigma."""
    return math.exp(-case.delta1 * case.tau) / case.delta1 * np.log(k) + varsigma


# ------------------------------------------------------------------ DE solver

@dataclass
class LinearDESolution:
    slope: float
    H: float           # v(k) = H ln k + B
    B: float
    G1: float          # g(k) = G1 ln k + G0
    G0: float
    iterations: int
    fit_error: float

    def value(self, k):
        return self.H * np.log(k) + self.B

    def dvalue(self, k):
        return self.H / np.asarray(k, dtype=float)


def g_numeric(case: LinearCase, slope, ks):
    """g(k) = int_tau^inf e^{-delta1 t} u(sigma(K(t, k))) dt along the flow.

    For the piecewise kernel the remainder weight delta0 h + h' equals
    (delta0 - delta1) e^{-delta1 t} on t > tau, so g is the flow engine's
    remainder integral divided by delta0 - delta1.
    """
    pol = LinearPolicy(slope)
    scale = case.delta0 - case.delta1
    return np.array([remainder_utility(pol, case.tech, case.kernel, LogUtility(), k) / scale
                     for k in ks])


def solve_linear_de(case: LinearCase, ks=(0.5, 1.0, 2.0, 4.0), tol=1e-14, max_iter=50):
    """Fixed-point iteration on delta0 v = sup_c[u(c) + v'(f - c)] + (delta0 - delta1) g
    within the family v = H ln k + B, sigma = k/H.

    Each pass evaluates g along the current policy's flows and fits its ln k
    and constant coefficients; matching coefficients in the equation updates
    (H, B). Needs delta0 > delta1 (otherwise there is no g term).
    """
    d0, d1, A = case.delta0, case.delta1, case.A
    if not d0 > d1:
        raise ValueError("need delta0 > delta1")
    lk = np.log(np.asarray(ks, dtype=float))
    X = np.column_stack([lk, np.ones_like(lk)])
    s = d0
    for it in range(1, max_iter + 1):
        g = g_numeric(case, s, ks)
        (G1, G0), *_ = np.linalg.lstsq(X, g, rcond=None)
        fit = float(np.max(np.abs(X @ np.array([G1, G0]) - g)))
        H = (1.0 + (d0 - d1) * G1) / d0
        B = (-math.log(H) - 1.0 + A * H + (d0 - d1) * G0) / d0
        s_new = 1.0 / H
        done = abs(s_new - s) <= tol * s_new
        s = s_new
        if done:
            break
    return LinearDESolution(s, H, B, float(G1), float(G0), it, fit)


def de_check(case: LinearCase, sol: LinearDESolution, ks):
    """Flow-engine DE residual (remainder form) for the solved v and slope."""
    return de_residual(LinearPolicy(sol.slope), case.tech, case.kernel, LogUtility(), ks,
                       value=sol.value, dvalue=sol.dvalue)


def pin_varsigma(case: LinearCase, sol: LinearDESolution, k=1.0):
    """varsigma such that the equation holds at k with the closed-form g."""
    d0, d1 = case.delta0, case.delta1
    p = float(sol.dvalue(k))
    sup = float(LogUtility.hamiltonian_sup(p, case.A * k))
    g_needed = (d0 * float(sol.value(k)) - sup) / (d0 - d1)
    return g_needed - float(g_closed(case, k, 0.0))


def hjb_example_residual(case: LinearCase, sol: LinearDESolution, varsigma, ks):
    d0, d1 = case.delta0, case.delta1
    ks = np.asarray(ks, dtype=float)
    sup = LogUtility.hamiltonian_sup(sol.dvalue(ks), case.A * ks)
    return d0 * sol.value(ks) - sup - (d0 - d1) * g_closed(case, ks, varsigma)


def ie_slope(case: LinearCase, k1=1.0, k2=2.0):
    """Slope s for which the integrated equation holds within the linear family.

    v(k) = int h ln(sigma(K)) has ln k coefficient int h, so v' = (int h)/k and
    sigma = 1/v' gives s = 1/int h. Here int h comes from flow values at two k.
    """
    pol = LinearPolicy(naive_slope(case))
    v1 = value_functional(pol, case.tech, case.kernel, LogUtility(), k1)
    v2 = value_functional(pol, case.tech, case.kernel, LogUtility(), k2)
    return math.log(k2 / k1) / (v2 - v1)


# ------------------------------------------------------------------ constant discount

def hjb_constant_discount_check(policy, tech, delta0, utility=LogUtility(), grid=()):
    """delta0 v(k) - sup_c[u(c) + v'(k)(f(k) - c)] with v, v' from flows of `policy`
    under e^{-delta0 t}."""
    ker = Exponential(delta0)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    out = np.empty_like(grid)
    for i, k in enumerate(grid):
        v = value_functional(policy, tech, ker, utility, k)
        dv = marginal_value(policy, tech, ker, utility, k)
        out[i] = delta0 * v - float(utility.hamiltonian_sup(dv, tech.f(k)))
    return out


def euler_residual(traj, tech, delta, method="analytic"):
    """dC/C - (f'(K) - delta) along a policy-driven trajectory.

    method='analytic' uses sigma'(K)(f - sigma); 'fd' uses second-order
    differences of C on the time grid.
    """
    if method == "fd":
        dC = np.gradient(traj.C, traj.t, edge_order=2)
    else:
        dC = traj.info["dC"]
    return dC / traj.C - (tech.df(traj.K) - delta)
