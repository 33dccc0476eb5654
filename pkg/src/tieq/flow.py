"""Capital flow under a Markov policy, and the functionals evaluated along it.

Integrals over [0, inf) are split into a quadrature part on [0, T] (Gauss-Legendre
on every integrator step, using the dense output) and an exact exponential tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .model import LogUtility, DiscountKernel

RTOL = 1e-8
ATOL = 1e-10
SS_TOL = 1e-8      # relative distance to kbar that ends a flow
MAX_T = 20000.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class DivergedPolicy(RuntimeError):
    pass


class DegenerateValue(RuntimeError):
    pass


class PolicyFunction:
    """sigma on a grid, C^1 interpolant; steady state kbar with f(kbar) = sigma(kbar)."""

    def __init__(self, k, sigma, kbar, dsigma=None):
        k = np.asarray(k, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if np.any(np.diff(k) <= 0):
            raise ValueError("grid must be increasing")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        self.k, self.sigma, self.kbar = k, sigma, float(kbar)
        if dsigma is None:
            self._s = PchipInterpolator(k, sigma)
        else:
            self._s = CubicHermiteSpline(k, sigma, np.asarray(dsigma, dtype=float))
        self._ds = self._s.derivative()

    @property
    def domain(self):
        return float(self.k[0]), float(self.k[-1])

    def __call__(self, k):
        return self._s(k)

    def deriv(self, k):
        return self._ds(k)

    def scaled(self, factor):
        """Same grid, sigma multiplied by factor (steady state no longer consistent)."""
        return PolicyFunction(self.k, self.sigma * factor, self.kbar,
                              dsigma=self._ds(self.k) * factor)


class LinearPolicy:
    """sigma(k) = s k on (0, inf); no steady state, paths grow at rate A - s."""

    kbar = None
    domain = (0.0, math.inf)

    def __init__(self, slope):
        self.slope = float(slope)

    def __call__(self, k):
        return self.slope * np.asarray(k, dtype=float) if np.ndim(k) else self.slope * k

    def deriv(self, k):
        return self.slope + 0.0 * np.asarray(k) if np.ndim(k) else self.slope


@dataclass
class FlowResult:
    t: np.ndarray
    K: np.ndarray
    R: np.ndarray
    T: float
    closed: bool
    sol: object = None
    k0: float = 0.0

    def at(self, t):
        """(K, R) at times inside [0, T]."""
        y = self.sol(np.asarray(t, dtype=float))
        return y[0], y[1]


def integrate_flow(policy, tech, k: float, T: float | None = None, *, breakpoints=(),
                   rtol=RTOL, atol=ATOL, max_T=MAX_T) -> FlowResult:
    """Solve dK/dt = f(K) - sigma(K), dR/dt = (f'(K) - sigma'(K)) R.

    With T=None the run stops once |K - kbar| < SS_TOL (1 + kbar) (steady-state
    policies) or just past the last kernel breakpoint (linear policies).
    """
    lo, hi = policy.domain
    if not lo <= k <= hi:
        raise DivergedPolicy(f"k={k} outside policy domain [{lo}, {hi}]")
    kbar = policy.kbar

    def rhs(t, y):
        K, R = y
        return [tech.f(K) - policy(K), (tech.df(K) - policy.deriv(K)) * R]

    events = []
    stop_at_ss = T is None and kbar is not None
    if T is None:
        T = max(breakpoints, default=0.0) + 1.0 if kbar is None else max_T
    tol = SS_TOL * (1.0 + (kbar or 0.0))
    t_min = max(breakpoints, default=0.0)

    if stop_at_ss and abs(k - kbar) < tol:
        if t_min == 0.0:
            return FlowResult(np.array([0.0]), np.array([k]), np.array([1.0]), 0.0, True, None, k)
    if stop_at_ss:
        def near(t, y):
            return abs(y[0] - kbar) - tol if t >= t_min else 1.0
        near.terminal = True
        events.append(near)
    if math.isfinite(hi) or lo > 0:
        def leave(t, y):
            return min(y[0] - lo, hi - y[0]) + 1e-12 * (1.0 + abs(y[0]))
        leave.terminal = True
        events.append(leave)

    sol = solve_ivp(rhs, (0.0, T), [k, 1.0], method="RK45", rtol=rtol, atol=atol,
                    dense_output=True, events=events or None)
    if sol.status < 0:
        raise DivergedPolicy(sol.message)
    closed = False
    if sol.status == 1:
        fired = [i for i, te in enumerate(sol.t_events) if len(te)]
        name = events[fired[0]].__name__
        if name == "leave":
            raise DivergedPolicy(f"flow from k={k} left the policy domain at t={sol.t[-1]:.4g}")
        closed = True
    elif stop_at_ss:
        raise DivergedPolicy(f"flow from k={k} did not reach kbar within {T} years")
    return FlowResult(sol.t, sol.y[0], sol.y[1], float(sol.t[-1]), closed or kbar is None, sol.sol, k)


def semigroup_error(policy, tech, k, s, t, rtol=1e-12, atol=1e-13):
    """|K(s+t, k) - K(t, K(s, k))|, each leg integrated separately."""
    full = integrate_flow(policy, tech, k, s + t, rtol=rtol, atol=atol)
    first = integrate_flow(policy, tech, k, s, rtol=rtol, atol=atol)
    second = integrate_flow(policy, tech, float(first.K[-1]), t, rtol=rtol, atol=atol)
    return abs(float(full.K[-1]) - float(second.K[-1]))


# ----------------------------------------------------------------- quadrature

def _weight(kernel: DiscountKernel, mode: str):
    if mode == "h":
        return kernel.h, lambda p: p.a
    if mode == "mdh":
        return (lambda t: -kernel.dh(t)), lambda p: p.r * p.a
    if mode == "rem":
        return kernel.remainder, lambda p: (kernel.lead_rate - p.r) * p.a
    raise ValueError(mode)


def _gauss_nodes(fr: FlowResult, kernel: DiscountKernel):
    if fr.T <= 0:
        return np.empty(0), np.empty(0)
    edges = np.unique(np.concatenate([fr.t, [b for b in kernel.breakpoints() if 0 < b < fr.T]]))
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return t, w


def _tail(kernel, mode, T, c0, lam=0.0, c1=0.0):
    # int_T^inf w(t) [c0 e^{lam (t-T)} + c1 (t-T)] dt, T past every breakpoint
    _, amp = _weight(kernel, mode)
    out = 0.0
    for p in kernel.pieces():
        if p.hi <= T:
            continue
        a = amp(p)
        if a == 0.0:
            continue
        out += a * math.exp(-p.r * T) * (c0 / (p.r - lam) + c1 / p.r ** 2)
    return out


def _utility_integral(fr, policy, tech, kernel, utility, mode):
    t, w = _gauss_nodes(fr, kernel)
    wf, _ = _weight(kernel, mode)
    body = 0.0
    if t.size:
        K, _ = fr.at(t)
        body = float(np.dot(w * wf(t), utility.u(policy(K))))
    KT = fr.K[-1]
    if policy.kbar is None:
        g = tech.df(KT) - policy.slope
        tail = _tail(kernel, mode, fr.T, float(utility.u(policy(KT))), 0.0, g)
    else:
        tail = _tail(kernel, mode, fr.T, float(utility.u(tech.f(policy.kbar))))
    return body + tail


def _flow(policy, tech, kernel, k):
    return integrate_flow(policy, tech, k, breakpoints=kernel.breakpoints())


def value_functional(policy, tech, kernel, utility=LogUtility(), k=None, flow=None):
    """v(k) = int h(t) u(sigma(K(t,k))) dt."""
    fr = flow or _flow(policy, tech, kernel, k)
    return _utility_integral(fr, policy, tech, kernel, utility, "h")


def derivative_weighted_utility(policy, tech, kernel, utility=LogUtility(), k=None, flow=None):
    """-int h'(t) u(sigma(K(t,k))) dt with the pointwise derivative of h."""
    fr = flow or _flow(policy, tech, kernel, k)
    return _utility_integral(fr, policy, tech, kernel, utility, "mdh")


def remainder_utility(policy, tech, kernel, utility=LogUtility(), k=None, flow=None):
    fr = flow or _flow(policy, tech, kernel, k)
    return _utility_integral(fr, policy, tech, kernel, utility, "rem")


def marginal_value(policy, tech, kernel, utility=LogUtility(), k=None, flow=None):
    """int h u'(sigma(K)) sigma'(K) R dt, the derivative of the value functional in k."""
    fr = flow or _flow(policy, tech, kernel, k)
    t, w = _gauss_nodes(fr, kernel)
    body = 0.0
    if t.size:
        K, R = fr.at(t)
        body = float(np.dot(w * kernel.h(t), utility.du(policy(K)) * policy.deriv(K) * R))
    KT = fr.K[-1]
    RT = fr.R[-1]
    if policy.kbar is None:
        c0 = float(utility.du(policy(KT)) * policy.deriv(KT) * RT)
        tail = _tail(kernel, "h", fr.T, c0)
    else:
        kb = policy.kbar
        lam = float(tech.df(kb) - policy.deriv(kb))
        c0 = float(utility.du(tech.f(kb)) * policy.deriv(kb) * RT)
        tail = _tail(kernel, "h", fr.T, c0, lam)
    return body + tail


def perturbation_payoff(policy, tech, kernel, utility=LogUtility(), k=None, c=None, flow=None):
    """P1(k, sigma, c); vectorised over c."""
    J = marginal_value(policy, tech, kernel, utility, k, flow)
    s = policy(k)
    return utility.u(np.asarray(c, dtype=float)) - utility.u(s) + J * (s - np.asarray(c, dtype=float))


def payoff_argmax(policy, tech, kernel, utility=LogUtility(), k=None, c_grid=None, n=1000, span=0.5):
    """argmax of P1 over a c-grid centred on sigma(k); returns (c*, cell width)."""
    s = float(policy(k))
    if c_grid is None:
        c_grid = np.linspace(s * (1 - span), s * (1 + span), n)
    P = perturbation_payoff(policy, tech, kernel, utility, k, c_grid)
    return float(c_grid[int(np.argmax(P))]), float(c_grid[1] - c_grid[0])


# ----------------------------------------------------------------- residuals

def ie_residual(policy, tech, kernel, utility=LogUtility(), ks=(), value=None):
    """value(k) - int h u(sigma(K)) for a candidate value function `value`."""
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    out = np.empty_like(ks)
    for i, k in enumerate(ks):
        out[i] = float(value(k)) - value_functional(policy, tech, kernel, utility, k)
    return out


def de_residual(policy, tech, kernel, utility=LogUtility(), ks=(), value=None, dvalue=None):
    """LHS - sup_c [u(c) + v'(k)(f(k) - c)].

    LHS is lead*value(k) - int rem(t) u(sigma(K)) dt when a candidate value is
    given (lead = leading rate of the kernel, -h' = lead h - rem), and
    -int h' u(sigma(K)) dt otherwise. v' defaults to u'(sigma(k)).
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    out = np.empty_like(ks)
    for i, k in enumerate(ks):
        fr = _flow(policy, tech, kernel, k)
        if value is None:
            lhs = derivative_weighted_utility(policy, tech, kernel, utility, k, fr)
        else:
            lhs = kernel.lead_rate * float(value(k)) - remainder_utility(policy, tech, kernel, utility, k, fr)
        p = float(dvalue(k)) if dvalue is not None else float(utility.du(policy(k)))
        out[i] = lhs - float(utility.hamiltonian_sup(p, tech.f(k)))
    return out


def effective_discount_rate(policy, tech, kernel, utility=LogUtility(), k=None, eps=1e-12):
    fr = _flow(policy, tech, kernel, k)
    num = derivative_weighted_utility(policy, tech, kernel, utility, k, fr)
    den = value_functional(policy, tech, kernel, utility, k, fr)
    if abs(den) < eps:
        raise DegenerateValue(f"value {den:.3g} too close to zero at k={k}")
    return num / den
