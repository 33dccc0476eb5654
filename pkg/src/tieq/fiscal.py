"""Decentralization of the planned allocation: allocation rules, capital income
tax surface, long-run limits, laissez-faire steady state, lump-sum transfers.

Population: a cohort of age n has mass e^{-pi n}, so total population is 1/pi
and C = int e^{-pi n} c(t-n, t) dn. Per-capita wage is (f - K f') pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .model import OgEconomy, CobbDouglas
from .phase import Trajectory, psi_path


class InvalidPrice(ValueError):
    pass


class RootNotFound(RuntimeError):
    pass


class FiscalDiagnostics(RuntimeError):
    pass


@dataclass(frozen=True)
class AllocationRule:
    """phi(n) = A e^{-delta n} + B (optimal) or phi = pi (egalitarian)."""
    delta: float
    rho: float
    pi: float
    variant: str = "optimal"

    @property
    def coefs(self):
        d, r, p = self.delta, self.rho, self.pi
        if self.variant == "egalitarian":
            return 0.0, p
        s = p / d * (d + p) / (r + p)
        return s * (d - r), s * r

    def phi(self, n):
        A, B = self.coefs
        return A * np.exp(-self.delta * np.asarray(n, dtype=float)) + B

    def dphi(self, n):
        A, _ = self.coefs
        return -self.delta * A * np.exp(-self.delta * np.asarray(n, dtype=float))

    def log_slope(self, n):
        return self.dphi(n) / self.phi(n)

    def normalization(self):
        """int_0^inf e^{-pi n} phi(n) dn by quadrature (should be 1)."""
        return quad(lambda n: math.exp(-self.pi * n) * float(self.phi(n)), 0, np.inf,
                    epsabs=1e-14, epsrel=1e-13)[0]

    def normalization_exact(self):
        A, B = self.coefs
        return A / (self.delta + self.pi) + B / self.pi


def allocation_rule(econ: OgEconomy, variant="optimal") -> AllocationRule:
    if variant not in ("optimal", "egalitarian"):
        raise ValueError(f"unknown allocation variant {variant!r}")
    if econ.delta < econ.rho:
        raise ValueError("need delta >= rho")
    return AllocationRule(econ.delta, econ.rho, econ.pi, variant)


def commitment_allocation(econ: OgEconomy, n, s, C):
    """Consumption of age n at time s under the time-0 commitment rule."""
    d, r, p = econ.delta, econ.rho, econ.pi
    n, s = np.asarray(n, dtype=float), np.asarray(s, dtype=float)
    if np.any(n < 0) or np.any(s < 0) or np.any(np.asarray(C) <= 0):
        raise ValueError("need n, s >= 0 and C > 0")
    q = d + p - r
    den = p + (d - r) * np.exp(-q * s)
    age = np.where(n <= s, n, s)
    return p * q * np.exp((r - d) * age) / den * C


# ------------------------------------------------------------------ taxes

@dataclass
class FiscalSchedule:
    n: np.ndarray
    t: np.ndarray
    eta: np.ndarray          # shape (len(n), len(t))
    psi: np.ndarray
    r: np.ndarray
    eta_long: np.ndarray     # eta(n, infinity) at the trajectory's kbar
    rule: AllocationRule
    info: dict = field(default_factory=dict)


def default_age_grid():
    return np.arange(0.0, 100.0 + 0.25, 0.5)


def long_run_tax(econ: OgEconomy, kbar, rule: AllocationRule, n):
    fp = econ.tech.df(kbar)
    return (fp - econ.delta - rule.log_slope(n)) / fp


def tax_surface(traj: Trajectory, rule: AllocationRule, econ: OgEconomy, n=None) -> FiscalSchedule:
    """eta(n, t) = (-psi(t) - phi'(n)/phi(n)) / r_t with r_t = f'(K(t))."""
    n = default_age_grid() if n is None else np.asarray(n, dtype=float)
    r = econ.tech.df(traj.K)
    if np.any(r <= 0):
        raise InvalidPrice("non-positive interest rate on the trajectory")
    psi = psi_path(traj, econ)
    eta = (-psi[None, :] - rule.log_slope(n)[:, None]) / r[None, :]
    kbar = traj.kbar if traj.kbar is not None else traj.K[-1]
    return FiscalSchedule(n, traj.t, eta, psi, r, long_run_tax(econ, kbar, rule, n), rule,
                          {"kbar": kbar})


def cutoff_age(econ: OgEconomy) -> float:
    """Age where the long-run tax changes sign at the l.r.p. steady state."""
    return -math.log(econ.pi / (econ.delta + econ.pi)) / econ.delta


def cutoff_age_numeric(econ: OgEconomy, kbar, rule: AllocationRule | None = None, n_max=500.0):
    """Root of eta(., infinity) for any kbar; None when the sign never changes."""
    rule = rule or allocation_rule(econ)
    g = lambda n: float(long_run_tax(econ, kbar, rule, n))
    if g(0.0) * g(n_max) > 0:
        return None
    return brentq(g, 0.0, n_max, xtol=1e-13, rtol=1e-15)


def uniform_subsidy(econ: OgEconomy) -> float:
    """Closed-form long-run uniform subsidy (pi/rho)(delta - rho)/(pi + rho)."""
    d, r, p = econ.delta, econ.rho, econ.pi
    return p / r * (d - r) / (p + r)


def subsidy_at(econ: OgEconomy, kbar) -> float:
    """(delta - f'(kbar))/f'(kbar): the egalitarian long-run subsidy at kbar."""
    fp = econ.tech.df(kbar)
    return (econ.delta - fp) / fp


def market_steady_state(econ: OgEconomy) -> float:
    """Laissez-faire steady state: (f' - delta) f = pi (delta + pi) k."""
    if not isinstance(econ.tech, CobbDouglas):
        raise TypeError("market steady state implemented for Cobb-Douglas only")
    d, p = econ.delta, econ.pi
    tech = econ.tech
    g = lambda k: (tech.df(k) - d) * tech.f(k) - p * (d + p) * k
    hi = tech.inv_df(d)
    lo = hi * 1e-6
    if not g(lo) > 0 > g(hi):
        raise RootNotFound("no sign change for the market steady state")
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def market_residual(econ: OgEconomy, k):
    t = econ.tech
    return (t.df(k) - econ.delta) * t.f(k) - econ.pi * (econ.delta + econ.pi) * k


# ------------------------------------------------------------------ certificates

def foc_residual(traj: Trajectory, rule: AllocationRule, econ: OgEconomy, sched: FiscalSchedule):
    """(1 - eta) r - delta minus the growth of c(t-n, t) = phi(n) C(t) along
    each cohort, by centred differences on the trajectory grid."""
    t = traj.t
    dt = t[1] - t[0]
    lnC = np.log(traj.C)
    n = sched.n
    lhs = (1.0 - sched.eta[:, 1:-1]) * sched.r[None, 1:-1] - econ.delta
    lp = lambda a: np.log(rule.phi(a))
    centred = (lp(n + dt) - lp(np.maximum(n - dt, 0.0))) / (2 * dt)
    onesided = (-3 * lp(n) + 4 * lp(n + dt) - lp(n + 2 * dt)) / (2 * dt)
    dlnphi = np.where(n >= dt, centred, onesided)
    growth = dlnphi[:, None] + ((lnC[2:] - lnC[:-2]) / (2 * dt))[None, :]
    return lhs - growth


def aggregation_error(rule: AllocationRule):
    return abs(rule.normalization() - 1.0)


# ------------------------------------------------------------------ lump sums

def _cohort_discount(traj, rule, econ):
    # (1 - eta(tau, x)) r_x + pi = r_x + psi(x) + pi + phi'/phi(x - tau)
    psi = psi_path(traj, econ)
    base = CubicSpline(traj.t, econ.tech.df(traj.K) + psi + econ.pi).antiderivative()
    return base


def human_wealth(traj: Trajectory, rule: AllocationRule, econ: OgEconomy, tau, t0):
    """h(tau, t0) = int_t0^inf omega_s exp(-int_t0^s ((1-eta) r + pi)) ds.

    Quadrature on the trajectory span plus an exact tail past its end, where
    r + psi has reached delta.
    """
    d, p = econ.delta, econ.pi
    T = traj.t[-1]
    if not 0 <= t0 <= T:
        raise ValueError("t0 outside the trajectory")
    K = traj.K
    omega = CubicSpline(traj.t, (econ.tech.f(K) - K * econ.tech.df(K)) * p)
    Rb = _cohort_discount(traj, rule, econ)
    phi0 = float(rule.phi(t0 - tau))

    def disc(s):
        return np.exp(-(Rb(s) - Rb(t0))) * rule.phi(s - tau) / phi0

    body = quad(lambda s: float(omega(s) * disc(s)), t0, T, limit=400,
                epsabs=1e-12, epsrel=1e-11)[0]
    # tail: omega, r + psi frozen at the terminal state
    lam = float(econ.tech.df(K[-1]) + psi_path(traj, econ)[-1] + p)
    if not lam > 0:
        raise FiscalDiagnostics("non-integrable human wealth tail")
    A, B = rule.coefs
    nT = T - tau
    phiT = float(rule.phi(nT))
    tail_shape = (A * math.exp(-d * nT) / (lam + d) + B / lam) / phiT
    tail = float(omega(T)) * float(disc(T)) * tail_shape
    return body + tail


@dataclass
class LumpSums:
    tau: np.ndarray
    b: np.ndarray
    h: np.ndarray
    a: np.ndarray


def lump_sum_present_values(traj: Trajectory, rule: AllocationRule, econ: OgEconomy,
                            taus=None, assets=None) -> LumpSums:
    """b(tau, max(tau, 0)) = c*(tau, .)/(delta + pi) - h(tau, .) - a(tau, 0)[tau < 0].

    assets: a(tau, 0) for the tau < 0 entries; defaults to equal per-capita
    shares of K(0), i.e. pi K(0).
    """
    taus = np.array([-40.0, -20.0, -10.0, 0.0, 10.0, 20.0]) if taus is None else np.asarray(taus, float)
    C = CubicSpline(traj.t, traj.C)
    b = np.empty_like(taus)
    h = np.empty_like(taus)
    a = np.zeros_like(taus)
    old = taus < 0
    if assets is None:
        a[old] = econ.pi * traj.K[0]
    else:
        assets = np.asarray(assets, dtype=float)
        if assets.shape != (int(old.sum()),):
            raise ValueError("need one asset value per pre-existing cohort")
        a[old] = assets
    for i, tau in enumerate(taus):
        t0 = max(tau, 0.0)
        c = float(rule.phi(t0 - tau) * C(t0))
        h[i] = human_wealth(traj, rule, econ, tau, t0)
        b[i] = c / (econ.delta + econ.pi) - h[i] - a[i]
    return LumpSums(taus, b, h, a)
