"""Slow, independent reference computations used as test oracles.

Kernels here are written out as scalar closed forms and never touch the
package's kernel objects, tables or caches.
"""

import math
import warnings

import numpy as np
from scipy import integrate

SQRT_2PI = math.sqrt(2.0 * math.pi)


def phi(u):
    return math.exp(-0.5 * u * u) / SQRT_2PI


# half-moments of the standard normal on [0, inf): 1/2, 1/sqrt(2 pi), 1/2
_LG_DEN = 0.25 - 1.0 / (2.0 * math.pi)


def one_sided_gaussian(u):
    return (0.5 - u / SQRT_2PI) / _LG_DEN * phi(u) if u >= 0 else 0.0


def epanechnikov(u):
    return 0.75 * (1.0 - u * u) if abs(u) <= 1.0 else 0.0


# half-moments of the Epanechnikov kernel: 1/2, 3/16, 1/10
_LE_DEN = 0.5 * 0.1 - (3.0 / 16.0) ** 2


def one_sided_epanechnikov(u):
    return (0.1 - u * 3.0 / 16.0) / _LE_DEN * epanechnikov(u) if 0.0 <= u <= 1.0 else 0.0


ORACLE_KERNELS = {
    # label: (function, support, value assigned to a zero lag between distinct points)
    "gaussian": (phi, (-40.0, 40.0), phi(0.0)),
    "one_sided:gaussian": (one_sided_gaussian, (0.0, 40.0), 0.5 * one_sided_gaussian(0.0)),
    "epanechnikov": (epanechnikov, (-1.0, 1.0), epanechnikov(0.0)),
    "one_sided:epanechnikov": (one_sided_epanechnikov, (0.0, 1.0), 0.5 * one_sided_epanechnikov(0.0)),
}


def autocorrelation(g, v, support):
    """integral of g(u) g(u - v) du by adaptive quadrature."""
    lo, hi = support
    a, b = max(lo, lo + v), min(hi, hi + v)
    if b <= a:
        return 0.0
    pts = [p for p in (0.0, v) if a < p < b]
    with warnings.catch_warnings():
        # the requested accuracy sits at the rounding floor
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(
            lambda u: g(u) * g(u - v), a, b, epsabs=1e-15, epsrel=1e-13, limit=400, points=pts or None
        )
    return val


def criterion(x, b, label):
    """CV(b) = R(f_b) - (2/n) sum_i f_b^{-i}(X_i) by direct double loops."""
    g, support, tie = ORACLE_KERNELS[label]
    x = [float(v) for v in x]
    n = len(x)
    rough = 0.0
    loo = 0.0
    for i in range(n):
        for j in range(n):
            d = (x[i] - x[j]) / b
            rough += autocorrelation(g, d, support)
            if i != j:
                loo += tie if d == 0.0 else g(d)
    return rough / (n * n * b) - 2.0 * loo / (n * (n - 1) * b)


def loo_estimate(x, b, g, i):
    """f_b^{-i}(X_i) recomputed from the sample with X_i deleted."""
    rest = [v for k, v in enumerate(x) if k != i]
    return sum(g((x[i] - v) / b) for v in rest) / (len(rest) * b)


def trapezoid_b(g_vec, lo, hi, points=100_000, outer_max=12.0):
    """B(g) with D_g, G_g and both outer integrals by the dense trapezoid rule."""
    u = np.linspace(lo, hi, points)
    gu = g_vec(u)
    du = np.diff(u)
    D = np.concatenate([[0.0], np.cumsum(0.5 * du * (gu[1:] + gu[:-1]))])
    ug = u * gu
    G = np.concatenate([[0.0], np.cumsum(0.5 * du * (ug[1:] + ug[:-1]))])

    def Dz(z):
        return np.interp(z, u, D, left=0.0, right=D[-1])

    def Gz(z):
        return np.interp(z, u, G, left=0.0, right=G[-1])

    z = np.linspace(0.0, outer_max, points)
    right = (z * (1.0 - Dz(z)) + Gz(z)) ** 2
    left = (z * Dz(-z) + Gz(-z)) ** 2
    return float(np.trapezoid(right, z) + np.trapezoid(left, z))


def trapezoid_ise(pdf, x, h, lo, hi, points=100_000):
    """ISE of the Gaussian-kernel estimate by the trapezoid rule on [lo, hi]."""
    t = np.linspace(lo, hi, points)
    x = np.asarray(x, dtype=float)
    fhat = np.exp(-0.5 * ((t[:, None] - x[None, :]) / h) ** 2).sum(axis=1) / (x.size * h * SQRT_2PI)
    return float(np.trapezoid((fhat - pdf(t)) ** 2, t))


def median(values):
    s = sorted(values)
    k = len(s)
    return s[k // 2] if k % 2 else 0.5 * (s[k // 2 - 1] + s[k // 2])
