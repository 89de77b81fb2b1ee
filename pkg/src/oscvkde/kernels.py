"""Kernel construction.

Every kernel is a :class:`Kernel`: an immutable, vectorised function together
with its declared support.  Two-sided base kernels (Gaussian, Epanechnikov,
quartic) are built directly; right-sided cross-validation kernels are obtained
either by linearly tilting a two-sided kernel and cutting it at the origin, from
the two-parameter Gaussian-difference family, or from three fixed polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import integrate

from .errors import DegenerateKernel, InvalidParam, UnknownKernelLabel

# Gaussian-tailed kernels are treated as zero beyond this many (tail) units
# when a finite integration range is required; phi(9) ~ 1e-18.
TRUNCATION_BOUND = 9.0

HALF_MOMENT_ABS_TOL = 1e-12
DENOMINATOR_EPS = 1e-12

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _fmt(x: float) -> str:
    return "%.12g" % x


@dataclass(frozen=True, eq=False)
class Kernel:
    """A univariate kernel.

    ``func`` is only ever called on points inside ``support``; calling the
    kernel returns exact zeros elsewhere.  ``tail_scale`` stretches the
    truncation window of infinite supports (a kernel built from
    ``phi(u / 10)`` needs ten times the usual range).
    """

    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support: Tuple[float, float]
    symmetric: bool
    label: str
    tail_scale: float = 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (u >= lo) & (u <= hi)
        out = np.zeros(u.shape)
        if inside.all():
            out = np.asarray(self.func(u), dtype=float) * np.ones(u.shape)
        elif inside.any():
            out[inside] = self.func(u[inside])
        if out.ndim == 0:
            return float(out)
        return out

    evaluate = __call__

    @property
    def one_sided(self) -> bool:
        return self.support[0] == 0.0

    @property
    def compact(self) -> bool:
        return math.isfinite(self.support[0]) and math.isfinite(self.support[1])

    def effective_support(self, bound: float = TRUNCATION_BOUND) -> Tuple[float, float]:
        """Declared support with infinite ends replaced by +-bound * tail_scale."""
        lo, hi = self.support
        reach = bound * self.tail_scale
        return (lo if math.isfinite(lo) else -reach, hi if math.isfinite(hi) else reach)

    @property
    def tie_value(self) -> float:
        """Kernel value assigned to a zero lag between two distinct observations.

        This is the midpoint of the one-sided limits at the origin: K(0) for a
        kernel continuous there, L(0)/2 for a kernel whose support starts at 0.
        """
        lo, hi = self.support
        if lo == 0.0 or hi == 0.0:
            return 0.5 * float(self(0.0))
        return float(self(0.0))

    def __repr__(self):
        return f"Kernel({self.label!r}, support={self.support})"


def _gaussian(u):
    return np.exp(-0.5 * u * u) / SQRT_2PI


def _epanechnikov(u):
    return 0.75 * (1.0 - u * u)


def _quartic(u):
    w = 1.0 - u * u
    return (15.0 / 16.0) * w * w


_BASE = {
    "gaussian": (_gaussian, (-math.inf, math.inf)),
    "epanechnikov": (_epanechnikov, (-1.0, 1.0)),
    "quartic": (_quartic, (-1.0, 1.0)),
}

BASE_KERNELS = tuple(_BASE)


@lru_cache(maxsize=None)
def make_base_kernel(name: str) -> Kernel:
    """Standard second-order two-sided kernel: gaussian, epanechnikov or quartic."""
    try:
        func, support = _BASE[name]
    except KeyError:
        raise UnknownKernelLabel(name) from None
    return Kernel(func, support, True, name)


def _half_moments(H: Kernel) -> Tuple[float, float, float]:
    _, hi = H.effective_support()
    moments = []
    for k in range(3):
        val, _ = integrate.quad(
            lambda t, k=k: t**k * H.func(t), 0.0, hi, epsabs=HALF_MOMENT_ABS_TOL, epsrel=1e-13, limit=200
        )
        moments.append(val)
    return tuple(moments)


@lru_cache(maxsize=None)
def make_one_sided(H: Kernel) -> Kernel:
    """Right-sided kernel obtained by tilting ``H`` linearly on [0, inf).

    L(u) = (m2 - u m1) / (m0 m2 - m1^2) * H(u) for u >= 0, where mk are the
    half-moments of H over [0, inf).  The result integrates to one and has a
    zero first moment.
    """
    m0, m1, m2 = _half_moments(H)
    den = m0 * m2 - m1 * m1
    if abs(den) < DENOMINATOR_EPS:
        raise DegenerateKernel(f"half-moment determinant of {H.label} is {den:g}")
    hfunc = H.func

    def func(u):
        return (m2 - u * m1) / den * hfunc(u)

    return Kernel(func, (0.0, H.support[1]), False, f"one_sided:{H.label}", H.tail_scale)


@dataclass(frozen=True)
class LIParams:
    """Parameters of the Gaussian-difference one-sided family.

    The family is L(u) = (a + b u) / c * H(u) on [0, inf) with
    H(u) = (1 + alpha) phi(u) - alpha phi(u / sigma) / sigma.
    """

    alpha: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidParam(f"sigma must be positive, got {self.sigma}")
        if not math.isfinite(self.alpha):
            raise InvalidParam(f"alpha must be finite, got {self.alpha}")

    @property
    def a(self) -> float:
        return 2.0 * math.pi * (1.0 + self.alpha - self.alpha * self.sigma**2)

    @property
    def b_coef(self) -> float:
        return -2.0 * SQRT_2PI * (1.0 + self.alpha - self.alpha * self.sigma)

    @property
    def c(self) -> float:
        return math.pi * (1.0 + self.alpha - self.alpha * self.sigma**2) - 2.0 * (
            1.0 + self.alpha - self.alpha * self.sigma
        ) ** 2

    @property
    def label(self) -> str:
        return f"LI:{_fmt(self.alpha)}:{_fmt(self.sigma)}"


@lru_cache(maxsize=256)
def _make_li(alpha: float, sigma: float) -> Kernel:
    p = LIParams(alpha, sigma)
    a, b, c = p.a, p.b_coef, p.c
    if abs(c) < DENOMINATOR_EPS:
        raise DegenerateKernel(f"c = {c:g} for {p.label}")

    def func(u):
        h = (1.0 + alpha) * _gaussian(u) - alpha * _gaussian(u / sigma) / sigma
        return (a + b * u) / c * h

    return Kernel(func, (0.0, math.inf), False, p.label, max(1.0, sigma))


def make_LI(params: LIParams) -> Kernel:
    return _make_li(float(params.alpha), float(params.sigma))


def _l1(u):
    return 6.0 * u * (1.0 - u) * (6.0 - 10.0 * u)


def _l2(u):
    return 30.0 * u**2 * (1.0 - u) ** 2 * (8.0 - 14.0 * u)


def _l3(u):
    return 140.0 * u**3 * (1.0 - u) ** 3 * (10.0 - 18.0 * u)


_POLY = {"L1": _l1, "L2": _l2, "L3": _l3}


@lru_cache(maxsize=None)
def make_polynomial_onesided(which: str) -> Kernel:
    try:
        func = _POLY[which]
    except KeyError:
        raise UnknownKernelLabel(which) from None
    return Kernel(func, (0.0, 1.0), False, which)


def rescale_kernel(kernel: Kernel, s: float) -> Kernel:
    """The kernel u -> s * K(s u); still a second-order kernel."""
    if not s > 0:
        raise InvalidParam(f"scale must be positive, got {s}")
    lo, hi = kernel.support
    func = kernel.func

    def scaled(u):
        return s * func(s * u)

    return Kernel(scaled, (lo / s, hi / s), kernel.symmetric, f"{kernel.label}@{_fmt(s)}", kernel.tail_scale / s)


# Named robust/almost robust members of the LI family.
ROBUST_LI = LIParams(16.8954588, 1.01)
LI_CANDIDATES = (ROBUST_LI, LIParams(0.4275, 10.0), LIParams(0.9821, 10.0), LIParams(4.0, 0.8))


def gaussian() -> Kernel:
    return make_base_kernel("gaussian")


def one_sided_gaussian() -> Kernel:
    return make_one_sided(gaussian())


def kernel_from_label(label: str) -> Kernel:
    """Resolve a canonical kernel label.

    Accepted forms: ``gaussian``, ``epanechnikov``, ``quartic``,
    ``one_sided:<base>``, ``LI:<alpha>:<sigma>`` and ``L1``/``L2``/``L3``.
    """
    label = label.strip()
    if label in _BASE:
        return make_base_kernel(label)
    if label in _POLY:
        return make_polynomial_onesided(label)
    head, _, rest = label.partition(":")
    if head == "one_sided" and rest in _BASE:
        return make_one_sided(make_base_kernel(rest))
    if head == "LI":
        parts = rest.split(":")
        if len(parts) == 2:
            try:
                alpha, sigma = float(parts[0]), float(parts[1])
            except ValueError:
                raise UnknownKernelLabel(label) from None
            return make_LI(LIParams(alpha, sigma))
    raise UnknownKernelLabel(label)
