"""Economic primitives: discount kernels, log utility, technologies, OG bundle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    pass


def _check_t(t):
    if np.any(np.asarray(t) < 0):
        raise ModelError("negative time")


# ---------------------------------------------------------------- kernels
#
# Every kernel is a finite sum of exponential pieces a*exp(-r t) living on
# (lo, hi]. That representation gives h, h', tails and the remainder used by
# the differentiated equation in one place.

@dataclass(frozen=True)
class _Piece:
    a: float
    r: float
    lo: float = 0.0
    hi: float = math.inf

    def tail(self, T: float) -> float:
        # int_{max(T,lo)}^{hi} a e^{-r s} ds
        s0 = max(T, self.lo)
        if s0 >= self.hi:
            return 0.0
        end = 0.0 if math.isinf(self.hi) else math.exp(-self.r * self.hi)
        return self.a * (math.exp(-self.r * s0) - end) / self.r


def _mask(p, t):
    # pieces cover (lo, hi], the first one also owns t = 0
    m = t <= p.hi
    return m & (t > p.lo) if p.lo > 0 else m


class DiscountKernel:
    lead_rate: float = 0.0
    kind = "abstract"

    def pieces(self) -> tuple:
        raise NotImplementedError

    def breakpoints(self) -> tuple:
        return ()

    def h(self, t):
        _check_t(t)
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.pieces():
            m = _mask(p, t)
            out = out + np.where(m, p.a * np.exp(-p.r * t), 0.0)
        return out if out.ndim else float(out)

    def dh(self, t):
        """Pointwise derivative (jumps of h are ignored)."""
        _check_t(t)
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.pieces():
            m = _mask(p, t)
            out = out - np.where(m, p.r * p.a * np.exp(-p.r * t), 0.0)
        return out if out.ndim else float(out)

    def remainder(self, t):
        """r(t) in -h'(t) = lead_rate*h(t) - r(t)."""
        return self.lead_rate * self.h(t) + self.dh(t)

    def tail_integral(self, T: float = 0.0) -> float:
        if T < 0:
            raise ModelError("negative horizon")
        return float(sum(p.tail(T) for p in self.pieces()))

    def dh_tail_integral(self, T: float = 0.0) -> float:
        # int_T^inf -h'(s) ds with pointwise h'
        return float(sum(p.r * p.tail(T) for p in self.pieces()))

    def remainder_tail_integral(self, T: float = 0.0) -> float:
        return self.lead_rate * self.tail_integral(T) - self.dh_tail_integral(T)


@dataclass(frozen=True)
class Exponential(DiscountKernel):
    delta0: float
    kind = "exponential"

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ModelError("delta0 must be positive")

    @property
    def lead_rate(self):
        return self.delta0

    def pieces(self):
        return (_Piece(1.0, self.delta0),)


@dataclass(frozen=True)
class PiecewiseExponential(DiscountKernel):
    """e^{-d0 t} up to tau, then e^{-d1 t}.

    With continuous=True the second branch is e^{-d0 tau} e^{-d1 (t-tau)} instead,
    which removes the jump at tau.
    """
    delta0: float
    delta1: float
    tau: float
    continuous: bool = False
    kind = "piecewise"

    def __post_init__(self):
        if not (self.delta0 >= self.delta1 > 0):
            raise ModelError("need delta0 >= delta1 > 0")
        if not self.tau > 0:
            raise ModelError("tau must be positive")

    @property
    def lead_rate(self):
        return self.delta0

    def pieces(self):
        if self.continuous:
            a1 = math.exp((self.delta1 - self.delta0) * self.tau)
        else:
            a1 = 1.0
        return (_Piece(1.0, self.delta0, 0.0, self.tau),
                _Piece(a1, self.delta1, self.tau, math.inf))

    def breakpoints(self):
        return (self.tau,)


@dataclass(frozen=True)
class OgMixture(DiscountKernel):
    """theta e^{-(delta+pi)t} + (1-theta) e^{-rho t}."""
    delta: float
    rho: float
    pi: float
    kind = "og"

    def __post_init__(self):
        if not (self.delta >= self.rho > 0 and self.pi > 0):
            raise ModelError("need delta >= rho > 0 and pi > 0")

    @property
    def theta(self) -> float:
        return (self.delta - self.rho) / (self.pi + self.delta - self.rho)

    @property
    def lead_rate(self):
        return self.delta + self.pi

    def pieces(self):
        th = self.theta
        out = []
        if th > 0:
            out.append(_Piece(th, self.delta + self.pi))
        out.append(_Piece(1.0 - th, self.rho))
        return tuple(out)


def discount_eval(kernel: DiscountKernel, t):
    return kernel.h(t)


def discount_tail_integral(kernel: DiscountKernel, T: float = 0.0) -> float:
    return kernel.tail_integral(T)


# ---------------------------------------------------------------- utility

@dataclass(frozen=True)
class LogUtility:
    kind = "log"

    @staticmethod
    def u(c):
        return np.log(c)

    @staticmethod
    def du(c):
        return 1.0 / np.asarray(c, dtype=float) if np.ndim(c) else 1.0 / c

    @staticmethod
    def inv_du(y):
        return 1.0 / np.asarray(y, dtype=float) if np.ndim(y) else 1.0 / y

    @staticmethod
    def hamiltonian_sup(p, y):
        """sup_c [ln c + p (y - c)] = -ln p - 1 + p y, attained at c = 1/p."""
        return -np.log(p) - 1.0 + p * y


# ---------------------------------------------------------------- technology

class Technology:
    def f(self, k):
        raise NotImplementedError

    def df(self, k):
        raise NotImplementedError

    def __call__(self, k):
        return self.f(k), self.df(k)


@dataclass(frozen=True)
class Linear(Technology):
    A: float
    kind = "linear"

    def __post_init__(self):
        if not self.A > 0:
            raise ModelError("A must be positive")

    def f(self, k):
        return self.A * k

    def df(self, k):
        return self.A + 0.0 * np.asarray(k) if np.ndim(k) else self.A

    def d2f(self, k):
        return 0.0 * np.asarray(k) if np.ndim(k) else 0.0

    def series(self, k0, n):
        c = np.zeros(n)
        c[0] = self.A * k0
        if n > 1:
            c[1] = self.A
        return c


@dataclass(frozen=True)
class CobbDouglas(Technology):
    A: float
    alpha: float
    kind = "cobb_douglas"

    def __post_init__(self):
        if not (self.A > 0 and 0 < self.alpha < 1):
            raise ModelError("need A > 0 and 0 < alpha < 1")

    def f(self, k):
        return self.A * k ** self.alpha

    def df(self, k):
        return self.alpha * self.A * k ** (self.alpha - 1.0)

    def d2f(self, k):
        return self.alpha * (self.alpha - 1.0) * self.A * k ** (self.alpha - 2.0)

    def series(self, k0, n):
        """Taylor coefficients of f around k0."""
        c = np.empty(n)
        c[0] = self.A * k0 ** self.alpha
        for j in range(1, n):
            c[j] = c[j - 1] * (self.alpha - j + 1) / (j * k0)
        return c

    def inv_df(self, x):
        # k with f'(k) = x
        return (self.alpha * self.A / x) ** (1.0 / (1.0 - self.alpha))


def technology_eval(tech: Technology, k):
    if np.any(np.asarray(k) <= 0):
        raise ModelError("capital must be positive")
    return tech.f(k), tech.df(k)


# ---------------------------------------------------------------- OG bundle

@dataclass(frozen=True)
class OgEconomy:
    kernel: OgMixture
    tech: Technology
    utility: LogUtility = field(default_factory=LogUtility)

    @classmethod
    def make(cls, delta=0.06, rho=0.02, pi=0.04, A=1.0, alpha=0.3):
        return cls(OgMixture(delta, rho, pi), CobbDouglas(A, alpha))

    @property
    def delta(self):
        return self.kernel.delta

    @property
    def rho(self):
        return self.kernel.rho

    @property
    def pi(self):
        return self.kernel.pi

    @property
    def rho_below_pi(self) -> bool:
        # side condition used in the local stability argument
        return self.rho < self.pi

    @property
    def time_consistent(self) -> bool:
        return self.delta == self.rho

    @property
    def lrp_marginal(self) -> float:
        d, r, p = self.delta, self.rho, self.pi
        return r * (p + d) / (p + r)

    def with_(self, **kw):
        d = dict(delta=self.delta, rho=self.rho, pi=self.pi)
        d.update({k: v for k, v in kw.items() if k in d})
        tech = kw.get("tech", self.tech)
        return OgEconomy(OgMixture(d["delta"], d["rho"], d["pi"]), tech, self.utility)
