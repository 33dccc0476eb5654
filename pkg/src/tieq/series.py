"""Truncated power-series arithmetic (coefficient arrays in the offset h)."""
import math

import numpy as np


def mul(a, b):
    return np.convolve(a, b)[: len(a)]


def div(a, b):
    n = len(a)
    q = np.zeros(n)
    for i in range(n):
        q[i] = (a[i] - np.dot(q[:i], b[i:0:-1])) / b[0]
    return q


def deriv(a):
    d = np.zeros(len(a))
    d[:-1] = a[1:] * np.arange(1, len(a))
    return d


def integ(a, c0=0.0):
    r = np.zeros(len(a))
    r[0] = c0
    r[1:] = a[:-1] / np.arange(1, len(a))
    return r


def log_s(a):
    return integ(div(deriv(a), a), math.log(a[0]))


def log1p_s(x):
    one = x.copy()
    one[0] += 1.0
    return integ(div(deriv(x), one), math.log1p(x[0]))


def horner(c, h):
    h = np.asarray(h, dtype=float)
    out = np.zeros_like(h)
    for ci in c[::-1]:
        out = out * h + ci
    return out


def optimal_error(c, h):
    """Smallest term |c_n h^n| (n >= 1): error scale of an optimally truncated sum."""
    n = np.arange(len(c))
    with np.errstate(over="ignore", divide="ignore"):
        t = np.abs(c[1:]) * abs(h) ** n[1:]
    i = int(np.argmin(t))
    return float(t[i]), i + 1
