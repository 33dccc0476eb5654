"""Equilibrium construction for the two-exponential OG kernel.

The pair (v, w) solves a system that is singular at the steady state kbar, where
f = 1/v'. With x = f v' - 1 and mu = delta v - (delta-rho) w - ln f the system
becomes x - ln(1+x) = mu plus a scalar ODE for x, and w is recovered from mu.

Below kbar the solution is unique and is integrated outward from kbar - eps.
Above kbar every solution of the ODE is tangent to the same formal Taylor series,
so the equilibria converging to kbar from above form a continuum; outward
integration there amplifies any error like exp(C/(k - kbar)). We use the
optimally truncated series on the short stretch where it is accurate to
SERIES_TOL and stop the domain there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .model import OgEconomy, Linear
from .flow import PolicyFunction
from . import series as ps

SERIES_ORDER = 40
SERIES_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class InadmissibleSteadyState(SolverError):
    pass


class UnsupportedTechnology(SolverError):
    pass


class BranchError(SolverError):
    pass


@dataclass(frozen=True)
class SteadyStateInterval:
    k_lo: float
    k_hi: float

    def contains(self, k, strict=True):
        return self.k_lo < k < self.k_hi if strict else self.k_lo <= k <= self.k_hi

    def at(self, frac):
        return self.k_lo + frac * (self.k_hi - self.k_lo)


@dataclass(frozen=True)
class TaylorSeed:
    kbar: float
    v: float
    w: float
    dv: float
    dw: float
    d2v: float
    stability: float  # f' + v''/v'^2 at kbar


@dataclass
class ValuePair:
    kbar: float
    k: np.ndarray
    v: np.ndarray
    w: np.ndarray
    dv: np.ndarray
    dw: np.ndarray
    x: np.ndarray
    eps: float = 0.0
    econ: OgEconomy | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._v = CubicHermiteSpline(self.k, self.v, self.dv)
        self._w = CubicHermiteSpline(self.k, self.w, self.dw)

    @property
    def domain(self):
        return float(self.k[0]), float(self.k[-1])

    def value(self, k):
        return self._v(k)

    def unborn(self, k):
        return self._w(k)

    def dvalue(self, k):
        return self._v(k, 1)

    def d2value(self, k):
        return self._v(k, 2)


# ------------------------------------------------------------------ interval

def _inv_marginal(tech, x, bracket=(1e-12, 1e12)):
    if hasattr(tech, "inv_df"):
        return float(tech.inv_df(x))
    return brentq(lambda k: tech.df(k) - x, *bracket, xtol=1e-14, rtol=1e-15)


def steady_state_interval(econ: OgEconomy) -> SteadyStateInterval:
    if isinstance(econ.tech, Linear):
        raise UnsupportedTechnology("f' is constant: no interior steady-state interval")
    k_lo = _inv_marginal(econ.tech, econ.delta)
    k_hi = _inv_marginal(econ.tech, econ.lrp_marginal)
    return SteadyStateInterval(k_lo, k_hi)


def lrp_capital(econ: OgEconomy) -> float:
    return _inv_marginal(econ.tech, econ.lrp_marginal)


def stability_closed_form(econ: OgEconomy, kbar: float) -> float:
    d, r, p = econ.delta, econ.rho, econ.pi
    fp = econ.tech.df(kbar)
    return (r * (d + p) - (r + p) * fp) / (d - fp)


# ------------------------------------------------------------------ seeds

def boundary_values(econ: OgEconomy, kbar: float):
    d, r, p = econ.delta, econ.rho, econ.pi
    lf = math.log(econ.tech.f(kbar))
    return (r + p) / (r * (d + p)) * lf, p / (r * (d + p)) * lf


def taylor_seed(econ: OgEconomy, kbar: float) -> TaylorSeed:
    d, r = econ.delta, econ.rho
    if d == r:
        raise InadmissibleSteadyState("rho == delta: use the time-consistent solver")
    f, fp = econ.tech.f(kbar), econ.tech.df(kbar)
    if not fp < d:
        raise InadmissibleSteadyState(f"f'(kbar)={fp:.6g} >= delta: kbar outside I")
    stab = stability_closed_form(econ, kbar)
    if not stab < 0:
        raise InadmissibleSteadyState(f"stability value {stab:.6g} >= 0: kbar outside I")
    v, w = boundary_values(econ, kbar)
    dv = 1.0 / f
    dw = (d - fp) / ((d - r) * f)
    d2v = dv * dv * (stab - fp)
    return TaylorSeed(kbar, v, w, dv, dw, d2v, stab)


# ------------------------------------------------------------------ branches

def branch_solve_x(mu: float, side: str) -> float:
    """Solve x - ln(1+x) = mu on the branch X1 (side='below', x<=0) or X2 ('above').

    Newton on y = ln(1+x), i.e. expm1(y) - y = mu, kept inside a bracket.
    """
    if mu < -1e-12:
        raise BranchError(f"no solution for mu={mu:.3g} < 0")
    if mu <= 0.0:
        return 0.0
    if side == "above":
        lo, hi = 0.0, max(1.0, 2.0 * mu + 2.0)
        y = min(math.sqrt(2.0 * mu), hi)
        if mu > 1.0:
            y = math.log1p(mu + math.log1p(mu))  # crude large-mu start
    elif side == "below":
        lo, hi = -(mu + 1.0) - 1.0, 0.0
        y = max(-math.sqrt(2.0 * mu), lo)
        if mu > 1.0:
            y = -(mu + 1.0)
    else:
        raise ValueError(side)
    for _ in range(100):
        g = math.expm1(y) - y - mu
        # bracket update: g is increasing in |y| on each branch
        if (g > 0) == (side == "above"):
            hi = y
        else:
            lo = y
        dg = math.expm1(y)
        step = g / dg if dg != 0 else 0.0
        yn = y - step
        if not (lo < yn < hi) or dg == 0:
            yn = 0.5 * (lo + hi)
        if abs(yn - y) <= 1e-16 * max(1.0, abs(y)) or hi - lo < 1e-300:
            y = yn
            break
        y = yn
    return math.expm1(y)


# ------------------------------------------------------------------ invariant curve

def invariant_series(econ: OgEconomy, kbar: float, order: int = SERIES_ORDER):
    """Taylor coefficients (in h = k - kbar) of x(k) and v(k) on the invariant curve.

    Solves (1+x) D(x, k, v) = f x^2 x' with v' = (1+x)/f order by order; the
    order-n coefficient of x enters linearly with factor delta - f'(kbar).
    """
    d, r, p = econ.delta, econ.rho, econ.pi
    seed = taylor_seed(econ, kbar)
    n = order + 2
    F = econ.tech.series(kbar, n)
    Fp = ps.deriv(F)
    lf = ps.log_s(F)
    one = np.zeros(n)
    one[0] = 1.0
    x = np.zeros(n)
    v = np.zeros(n)
    v[0] = seed.v
    gain = d - Fp[0]
    for m in range(1, order + 1):
        v[m] = ps.div(one + x, F)[m - 1] / m
        L = ps.log1p_s(x)
        D = (ps.mul(one + x, -r * (p + d) * v + (p + d + r) * x)
             + (p + r) * ps.mul(one + x, lf - L) - ps.mul(x, Fp))
        E = D - ps.div(ps.mul(F, ps.mul(x, ps.mul(x, ps.deriv(x)))), one + x)
        x[m] = -E[m] / gain
        if not np.isfinite(x[m]):
            x, v = x[:m], v[:m]
            break
    else:
        v[order + 1] = ps.div(one + x, F)[order] / (order + 1)
        x = x[: order + 1]
    return x, v


def series_reach(xc, tol=SERIES_TOL, h_max=1.0):
    """Largest h (<= h_max) at which the optimally truncated series is within tol."""
    lo, hi = 0.0, h_max
    if ps.optimal_error(xc, hi)[0] <= tol:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ps.optimal_error(xc, mid)[0] <= tol:
            lo = mid
        else:
            hi = mid
    return lo


class _SeriesPiece:
    def __init__(self, xc, vc, h_reach):
        self.h_reach = h_reach
        _, nx = ps.optimal_error(xc, h_reach)
        self.xc = xc[: nx]
        self.vc = vc[: nx + 1]
        self.dxc = ps.deriv(self.xc)[:-1] if len(self.xc) > 1 else np.zeros(1)
        self.dvc = ps.deriv(self.vc)[:-1]
        self.d2vc = ps.deriv(self.dvc)[:-1] if len(self.dvc) > 1 else np.zeros(1)

    def eval(self, h):
        return (ps.horner(self.vc, h), ps.horner(self.xc, h), ps.horner(self.dxc, h))


# ------------------------------------------------------------------ k-system

def _rhs_k(econ: OgEconomy):
    d, r, p = econ.delta, econ.rho, econ.pi
    tech = econ.tech
    tc = d == r

    def rhs(k, s):
        v, x = s
        f, fp = tech.f(k), tech.df(k)
        if tc:
            dx = (1.0 + x) * (d * (1.0 + x) - fp) / (f * x)
        else:
            mu = x - math.log1p(x)
            B = -r * (p + d) * v + (p + r) * (mu + math.log(f))
            dmu = (d * (1.0 + x) - fp + (1.0 + x) * B / x) / f
            dx = (1.0 + x) * dmu / x
        return [(1.0 + x) / f, dx]

    return rhs


def _side_of(stability: float, sgn: int) -> str:
    # x ~ stability * v'(kbar) * (k - kbar)
    return "above" if stability * sgn > 0 else "below"


def _integrate_from(econ, k0, v0, x0, k_end, rtol, atol):
    def edge(k, s):
        return s[1] + 1.0 - 1e-9
    edge.terminal = True

    sol = solve_ivp(_rhs_k(econ), (k0, k_end), [v0, x0], method="LSODA",
                    rtol=rtol, atol=atol, dense_output=True, events=edge)
    if sol.status < 0:
        raise SolverError(sol.message)
    return sol


def _integrate_left(econ, seed, eps, k_end, rtol, atol, a=None):
    h = -eps
    a = seed.stability * seed.dv if a is None else a
    v0 = seed.v + seed.dv * h + 0.5 * seed.d2v * h * h
    # second-order seed: mu ~ (a h)^2 / 2, x on the branch fixed by the side
    x0 = branch_solve_x(0.5 * (a * h) ** 2, _side_of(a, -1))
    return _integrate_from(econ, seed.kbar + h, v0, x0, k_end, rtol, atol)


def _pair_arrays(econ, k, v, x, dx):
    d, r = econ.delta, econ.rho
    f, fp = econ.tech.f(k), econ.tech.df(k)
    mu = x - np.log1p(x)
    dv = (1.0 + x) / f
    d2v = dx / f - (1.0 + x) * fp / f ** 2
    dmu = x * dx / (1.0 + x)
    if d == r:
        w = dw = None
    else:
        w = (d * v - np.log(f) - mu) / (d - r)
        dw = (d * dv - fp / f - dmu) / (d - r)
    return mu, w, dv, dw, d2v


def solve_value_pair(econ: OgEconomy, kbar: float | None = None, omega=None, *, eps=None,
                     n_grid=600, n_series=201, rtol=1e-11, atol=1e-13, refine=True,
                     eps_tol=1e-7, series_tol=SERIES_TOL):
    """Construct (v, w) and the policy sigma = 1/v' on a neighbourhood of kbar.

    omega: requested (k_lo, k_hi); the lower end defaults to 0.75 kbar. The upper
    end is capped at the reach of the invariant-curve series (see module doc).
    rho == delta is dispatched to the time-consistent branch (kbar may be None).
    Returns (ValuePair, PolicyFunction).
    """
    if econ.time_consistent:
        return solve_time_consistent(econ, omega=omega, n_grid=n_grid, rtol=rtol, atol=atol)
    seed = taylor_seed(econ, kbar)
    lo, hi = omega if omega is not None else (0.75 * kbar, 1.25 * kbar)
    if not lo < kbar < hi:
        raise ValueError("omega must bracket kbar")
    eps = 1e-4 * (1.0 + kbar) if eps is None else eps

    xc, vc = invariant_series(econ, kbar)
    h_r = min(series_reach(xc, series_tol, hi - kbar), hi - kbar)
    sp = _SeriesPiece(xc, vc, h_r)
    eps = min(eps, h_r)

    spread = None
    h_left = min(h_r, 0.5 * (kbar - lo))
    if h_left > 10 * eps:
        # the series is accurate well past the seed distance: start the ODE there
        v_a, x_a, _ = (float(z[0]) for z in sp.eval(np.array([-h_left])))
        sol = _integrate_from(econ, kbar - h_left, v_a, x_a, lo, rtol, atol)
        refine, left_start = False, "series"
    else:
        sol = _integrate_left(econ, seed, eps, lo, rtol, atol)
        left_start = "taylor"
    if refine:
        for _ in range(8):
            half = _integrate_left(econ, seed, eps / 2, lo, rtol, atol)
            kk = np.linspace(max(sol.t[-1], half.t[-1]), kbar - 4 * eps, 64)
            spread = float(np.max(np.abs(sol.sol(kk)[0] - half.sol(kk)[0])))
            sol, eps = half, eps / 2
            if spread < eps_tol:
                break

    # left: ODE grid up to kbar - h_s, series on [kbar - h_s, kbar + h_r]
    h_s = min(h_r, kbar - sol.t[-1])
    k_ode = np.linspace(sol.t[-1], kbar - h_s, n_grid)[:-1]
    y = sol.sol(k_ode)
    rhs = _rhs_k(econ)
    dx_ode = np.array([rhs(k, yy)[1] for k, yy in zip(k_ode, y.T)])
    dk = min((kbar - h_s - k_ode[0]) / n_grid if len(k_ode) else np.inf, (h_s + h_r) / (n_series - 1))
    hs = np.linspace(-h_s, h_r, int(round((h_s + h_r) / dk)) + 1)
    hs = np.union1d(hs[np.abs(hs) > 1e-3 * (h_r + h_s) / n_series], [0.0])
    v_s, x_s, dx_s = sp.eval(hs)
    k = np.concatenate([k_ode, kbar + hs])
    v = np.concatenate([y[0], v_s])
    x = np.concatenate([y[1], x_s])
    dx = np.concatenate([dx_ode, dx_s])
    i0 = len(k_ode) + int(np.searchsorted(hs, 0.0))
    k[i0] = kbar
    mu, w, dv, dw, d2v = _pair_arrays(econ, k, v, x, dx)
    w[i0], dv[i0], dw[i0] = seed.w, seed.dv, seed.dw
    pair = ValuePair(kbar, k, v, w, dv, dw, x, eps=eps, econ=econ,
                     info={"eps_spread": spread, "seed": seed, "mu": mu, "d2v": d2v,
                           "series_reach": h_r, "requested": (lo, hi),
                           "ode_end": float(sol.t[-1]),
                           "left_start": left_start})
    sigma = econ.tech.f(k) / (1.0 + x)
    sigma[i0] = econ.tech.f(kbar)
    pol = PolicyFunction(k, sigma, kbar, dsigma=-d2v / dv ** 2)
    return pair, pol


# ------------------------------------------------------------------ rho == delta

def golden_rule_capital(econ: OgEconomy) -> float:
    """Modified golden rule f'(k) = delta."""
    return _inv_marginal(econ.tech, econ.delta)


def solve_time_consistent(econ: OgEconomy, omega=None, n_grid=600, rtol=1e-11, atol=1e-13):
    """rho == delta: the kernel is exponential and the HJB decouples from w.

    x' = (1+x)(delta(1+x) - f')/(f x) has a saddle at f'(kbar) = delta whose
    stable branch is attracting when integrated outward on both sides.
    w follows from the linear passive equation by quadrature-free integration.
    """
    d, p = econ.delta, econ.pi
    kbar = golden_rule_capital(econ)
    f, fp, fpp = econ.tech.f(kbar), econ.tech.df(kbar), econ.tech.d2f(kbar)
    a = (d - math.sqrt(d * d - 4.0 * f * fpp)) / (2.0 * f)
    vb, wb = boundary_values(econ, kbar)
    dv0 = 1.0 / f
    d2v0 = (a - fp * dv0) / f
    dw0 = p * dv0 / (d + p - f * a)
    lo, hi = omega if omega is not None else (0.75 * kbar, 1.25 * kbar)
    eps = 1e-4 * (1.0 + kbar)
    rhs = _rhs_k(econ)

    def rhs_w(k, s):
        v, x, w = s
        dv, dx = rhs(k, (v, x))
        dw = (1.0 + x) * (-p * v + (d + p) * w) / (econ.tech.f(k) * x)
        return [dv, dx, dw]

    parts = []
    for sgn, end in ((-1, lo), (1, hi)):
        h = sgn * eps
        y0 = [vb + dv0 * h + 0.5 * d2v0 * h * h, a * h, wb + dw0 * h]
        sol = solve_ivp(rhs_w, (kbar + h, end), y0, method="LSODA", rtol=rtol, atol=atol,
                        dense_output=True)
        if sol.status < 0:
            raise SolverError(sol.message)
        kk = np.linspace(kbar + h, sol.t[-1], n_grid)
        parts.append((kk, sol.sol(kk)))
    (kl, yl), (kh, yh) = parts
    k = np.concatenate([kl[::-1], [kbar], kh])
    Y = np.concatenate([yl[:, ::-1], [[vb], [0.0], [wb]], yh], axis=1)
    v, x, w = Y
    dx = np.array([rhs(kk, (vv, xx))[1] if xx != 0 else a for kk, vv, xx in zip(k, v, x)])
    mu, _, dv, _, d2v = _pair_arrays(econ, k, v, x, dx)
    dw = np.array([rhs_w(kk, yy)[2] if yy[1] != 0 else dw0 for kk, yy in zip(k, Y.T)])
    pair = ValuePair(kbar, k, v, w, dv, dw, x, eps=eps, econ=econ,
                     info={"time_consistent": True, "mu": mu, "d2v": d2v, "slope_x": a})
    sigma = econ.tech.f(k) / (1.0 + x)
    sigma[len(kl)] = f
    pol = PolicyFunction(k, sigma, kbar, dsigma=-d2v / dv ** 2)
    return pair, pol


# ------------------------------------------------------------------ desingularized system

def desingularized_rhs(econ: OgEconomy, x, k, v):
    """(dx/ds, dk/ds, dv/ds) = (D, f x^2/(1+x), x^2) with

    D = (1+x)[-rho(pi+delta) v + (pi+delta+rho) x] + (1+x)(pi+rho)[ln f - ln(1+x)] - x f'.
    """
    if not (x > -1 and k > 0):
        raise ValueError("need x > -1 and k > 0")
    d, r, p = econ.delta, econ.rho, econ.pi
    f, fp = econ.tech.f(k), econ.tech.df(k)
    D = ((1.0 + x) * (-r * (p + d) * v + (p + d + r) * x)
         + (1.0 + x) * (p + r) * (math.log(f) - math.log1p(x)) - x * fp)
    return D, f * x * x / (1.0 + x), x * x


def desingularized_jacobian(econ: OgEconomy, x, k, v, h=1e-6):
    """Centered-difference Jacobian of desingularized_rhs in (x, k, v)."""
    z = np.array([x, k, v], dtype=float)
    J = np.empty((3, 3))
    for j in range(3):
        dz = np.zeros(3)
        dz[j] = h * max(1.0, abs(z[j]))
        J[:, j] = (np.array(desingularized_rhs(econ, *(z + dz)))
                   - np.array(desingularized_rhs(econ, *(z - dz)))) / (2 * dz[j])
    return J


def center_manifold_fit(econ: OgEconomy, kbar: float, radius=None, n=7, settle=12.0):
    """Least-squares quadratic x = h(k - kbar, v - vbar) of the centre manifold.

    Short orbits are started off the manifold around (0, kbar, vbar) and run
    backward in s, where the transverse direction (eigenvalue delta - f') decays;
    their end points lie on the manifold up to exp(-settle).
    """
    seed = taylor_seed(econ, kbar)
    lam = econ.delta - econ.tech.df(kbar)
    radius = 0.005 * kbar if radius is None else radius
    pts = []
    for dk in np.linspace(-radius, radius, n):
        for dv in np.linspace(-radius, radius, n) * seed.dv * 0.5:
            k0, v0 = kbar + dk, seed.v + seed.dv * dk + dv
            sol = solve_ivp(lambda s, z: desingularized_rhs(econ, *z), (0.0, -settle / lam),
                            [0.0, k0, v0], method="DOP853", rtol=1e-12, atol=1e-14)
            pts.append(sol.y[:, -1])
    P = np.array(pts)
    dk, dv = P[:, 1] - kbar, P[:, 2] - seed.v
    X = np.column_stack([np.ones_like(dk), dk, dv, dk * dk, dk * dv, dv * dv])
    coef, *_ = np.linalg.lstsq(X, P[:, 0], rcond=None)
    return coef


def solve_desingularized(econ: OgEconomy, kbar: float, k_end: float, *, offset=None, coef=None):
    """Independent construction of the branch below kbar from the desingularized system.

    Seeds on the fitted centre manifold at kbar - offset and integrates backward in s
    until k reaches k_end. Returns (k, sigma) along the orbit, k increasing.
    """
    if not k_end < kbar:
        raise ValueError("the cross-check covers the branch below kbar")
    seed = taylor_seed(econ, kbar)
    coef = center_manifold_fit(econ, kbar) if coef is None else coef
    h = -(1e-4 * (1.0 + kbar) if offset is None else offset)
    v0 = seed.v + seed.dv * h + 0.5 * seed.d2v * h * h
    dv = v0 - seed.v
    x0 = float(coef @ [1.0, h, dv, h * h, h * dv, dv * dv])

    def reach(s, z):
        return z[1] - k_end
    reach.terminal = True

    sol = solve_ivp(lambda s, z: desingularized_rhs(econ, *z), (0.0, -1e12), [x0, kbar + h, v0],
                    method="LSODA", rtol=1e-11, atol=1e-14, events=reach)
    if sol.status < 0:
        raise SolverError(sol.message)
    x, k = sol.y[0][::-1], sol.y[1][::-1]
    keep = np.concatenate([[True], np.diff(k) > 0])
    x, k = x[keep], k[keep]
    return k, econ.tech.f(k) / (1.0 + x)


# ------------------------------------------------------------------ diagnostics

class DiagnosticsError(SolverError):
    pass


def numerical_second_derivative(pair: ValuePair, half_width=None, deg=6):
    """v''(kbar) from a polynomial fit to the solved grid around kbar."""
    kb = pair.kbar
    hw = half_width or 0.5 * min(kb - pair.k[0], pair.k[-1] - kb, 0.05 * kb)
    m = np.abs(pair.k - kb) <= hw
    if m.sum() < 3 * deg:
        raise DiagnosticsError("too few grid points near kbar for a curvature fit")
    c = np.polynomial.polynomial.polyfit((pair.k[m] - kb) / hw, pair.v[m], deg)
    return 2.0 * c[2] / hw ** 2


def stability_test(econ: OgEconomy, pair: ValuePair | None, kbar: float, rel_tol=1e-3):
    """f'(kbar) + v''(kbar)/v'(kbar)^2, negative iff kbar attracts the flow.

    Returns (closed_form, numerical). The numerical value uses v'' fitted on the
    solved grid; a relative disagreement above rel_tol raises DiagnosticsError.
    """
    closed = stability_closed_form(econ, kbar)
    if pair is None:
        return closed, None
    d2v = numerical_second_derivative(pair)
    dv = 1.0 / econ.tech.f(kbar)
    num = econ.tech.df(kbar) + d2v / dv ** 2
    if abs(num - closed) > rel_tol * abs(closed):
        raise DiagnosticsError(f"stability mismatch: closed {closed:.8g} vs numerical {num:.8g}")
    return closed, num


def welfare_split(pair: ValuePair, k):
    """(surviving cohorts, unborn) = (v - w, w)."""
    v, w = pair.value(k), pair.unborn(k)
    return v - w, w
