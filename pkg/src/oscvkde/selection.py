"""Criterion curves (LSCV, OSCV) and bandwidth selection.

Both criteria share one form::

    CV(b) = R(f_b) - (2/n) * sum_i f_b^{-i}(X_i)

with R(f_b) = (1/(n^2 b)) sum_{i,j} (g*g)((X_i - X_j)/b), where (g*g) is the
kernel's autocorrelation.  LSCV uses the two-sided estimation kernel, OSCV a
right-sided kernel whose minimiser is multiplied by a rescaling constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateCriterion, InvalidBandwidth, InvalidParam, InvalidSample, NotRobustKernel
from .functionals import DEFAULT_CONFIG, QuadratureConfig
from .kernels import ROBUST_LI, Kernel, gaussian, make_LI, one_sided_gaussian
from .rescaling import constant_nonsmooth, constant_smooth, relative_bias

CONV_TABLE_POINTS = 4096
ROBUST_TOLERANCE_PERCENT = 0.1
TIE_RTOL = 1e-8

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

_GL16_NODES, _GL16_WEIGHTS = np.polynomial.legendre.leggauss(16)


class Mode(str, Enum):
    SMOOTH = "smooth"
    NONSMOOTH = "nonsmooth"
    ROBUST = "robust"
    LSCV = "lscv"


def check_sample(data) -> np.ndarray:
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 2:
        raise InvalidSample(f"need at least 2 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidSample("observations must be finite")
    return x


def robust_scale(x: np.ndarray) -> float:
    """min(sd, IQR/1.349), falling back to whichever is positive; 0 for constant data."""
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.349
    positive = [s for s in (sd, iqr) if s > 0]
    return min(positive) if positive else 0.0


@dataclass(frozen=True)
class GridPolicy:
    """Bandwidth grid construction.

    By default the grid is log-spaced over [lo_factor, hi_factor] * s * n^(-1/5)
    with s = :func:`robust_scale`; ``lo``/``hi`` give absolute bounds instead.
    """

    lo_factor: float = 0.05
    hi_factor: float = 3.0
    num: int = 201
    lo: Optional[float] = None
    hi: Optional[float] = None
    spacing: str = "log"

    def __post_init__(self):
        if self.num < 3:
            raise InvalidParam("a grid needs at least 3 points")
        if (self.lo is None) != (self.hi is None):
            raise InvalidParam("give both absolute grid bounds or neither")
        if self.spacing not in ("log", "linear"):
            raise InvalidParam(f"unknown spacing {self.spacing!r}")

    @property
    def scale_relative(self) -> bool:
        return self.lo is None

    def bandwidths(self, sample, rescale: float = 1.0) -> np.ndarray:
        if self.scale_relative:
            x = check_sample(sample)
            s = robust_scale(x) or 1.0
            base = s * x.size ** (-0.2) * rescale
            lo, hi = self.lo_factor * base, self.hi_factor * base
        else:
            lo, hi = self.lo, self.hi
        if not (0 < lo < hi):
            raise InvalidBandwidth(f"invalid grid bounds [{lo}, {hi}]")
        if self.spacing == "log":
            return np.geomspace(lo, hi, self.num)
        return np.linspace(lo, hi, self.num)


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float).ravel()
    if g.size < 3:
        raise InvalidParam("a grid needs at least 3 points")
    if not np.all(g > 0) or not np.all(np.isfinite(g)):
        raise InvalidBandwidth("grid bandwidths must be positive and finite")
    if not np.all(np.diff(g) > 0):
        raise InvalidParam("grid must be strictly increasing")
    return g


def kde(sample, h: float, K: Kernel, x):
    """Kernel density estimate (1/(nh)) sum K((x - X_i)/h) at the point(s) x."""
    if not h > 0:
        raise InvalidBandwidth(f"bandwidth must be positive, got {h}")
    X = check_sample(sample)
    xs = np.asarray(x, dtype=float)
    flat = xs.ravel()
    out = np.empty(flat.shape)
    chunk = max(1, 2_000_000 // X.size)
    for start in range(0, flat.size, chunk):
        part = flat[start : start + chunk]
        out[start : start + chunk] = K((part[:, None] - X[None, :]) / h).sum(axis=1)
    out /= X.size * h
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


class SelfConvolution:
    """Tabulated autocorrelation v -> integral g(u) g(u - v) du of a kernel.

    The autocorrelation is even, so it is stored on [0, width] (width = length
    of the truncated support) at uniformly spaced nodes, computed by composite
    16-point Gauss-Legendre quadrature and interpolated by a cubic spline.
    """

    def __init__(self, g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG, points: int = CONV_TABLE_POINTS):
        lo, hi = g.effective_support(cfg.truncation_bound)
        self.width = hi - lo
        v = np.linspace(0.0, self.width, points)
        panels = 64
        values = np.empty(points)
        t = np.linspace(0.0, 1.0, panels + 1)
        for start in range(0, points, 256):
            vv = v[start : start + 256]
            a = lo + vv
            edges = a[:, None] + (hi - a)[:, None] * t[None, :]
            half = 0.5 * np.diff(edges, axis=1)
            mid = edges[:, :-1] + half
            u = mid[..., None] + half[..., None] * _GL16_NODES
            prod = g(u) * g(u - vv[:, None, None])
            values[start : start + 256] = (half * (prod @ _GL16_WEIGHTS)).sum(axis=1)
        values[-1] = 0.0
        self.step = v[1] - v[0]
        self.coef = CubicSpline(v, values).c
        self.points = points
        self.at_zero = float(values[0])

    def __call__(self, v):
        t = np.abs(np.asarray(v, dtype=float))
        idx = np.minimum((t / self.step).astype(np.int64), self.points - 2)
        dt = t - idx * self.step
        c = self.coef
        val = ((c[0, idx] * dt + c[1, idx]) * dt + c[2, idx]) * dt + c[3, idx]
        return np.where(t >= self.width, 0.0, val)


@lru_cache(maxsize=64)
def self_convolution(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> SelfConvolution:
    return SelfConvolution(g, cfg)


class CriterionEvaluator:
    """Evaluates the CV criterion of one sample and kernel at any bandwidth.

    Pairwise lags |X_i - X_j| (i < j) are sorted once so that each evaluation
    only touches pairs inside the kernel's reach.  A zero lag between distinct
    observations uses :attr:`Kernel.tie_value`.
    """

    def __init__(self, sample, kernel: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG):
        x = np.sort(check_sample(sample))
        self.n = x.size
        i, j = np.triu_indices(self.n, 1)
        self.lags = np.sort(x[j] - x[i])
        self.ties = int(np.searchsorted(self.lags, 0.0, side="right"))
        self.kernel = kernel
        self.conv = self_convolution(kernel, cfg)
        lo, hi = kernel.effective_support(cfg.truncation_bound)
        self.reach = max(abs(lo), abs(hi))
        self.zero_spread = self.ties == self.lags.size

    def __call__(self, b: float) -> float:
        if not b > 0:
            raise InvalidBandwidth(f"bandwidth must be positive, got {b}")
        n, lags, K = self.n, self.lags, self.kernel
        cut = int(np.searchsorted(lags, self.conv.width * b, side="left"))
        conv_sum = n * self.conv.at_zero + 2.0 * self.conv(lags[:cut] / b).sum()
        cut = int(np.searchsorted(lags, self.reach * b, side="right"))
        u = lags[self.ties : cut] / b
        if K.symmetric:
            loo = 2.0 * K(u).sum()
        elif K.support[0] >= 0.0:
            loo = K(u).sum()
        else:
            loo = K(u).sum() + K(-u).sum()
        loo += 2.0 * self.ties * K.tie_value
        return conv_sum / (n * n * b) - 2.0 * loo / (n * (n - 1) * b)

    def values(self, grid) -> np.ndarray:
        return np.array([self(b) for b in grid])


def golden_section(f, a: float, b: float, xtol: float) -> Tuple[float, float]:
    """Minimise a unimodal f on [a, b]; returns (x, f(x))."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True)
class CriterionCurve:
    kind: str
    kernel: str
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    minimizer: float
    minimum_value: float
    local_minima: Tuple[float, ...]
    degenerate: bool
    reason: Optional[str] = None

    def to_dict(self, include_curve: bool = False):
        out = {
            "kind": self.kind,
            "kernel": self.kernel,
            "minimizer": self.minimizer,
            "minimum_value": self.minimum_value,
            "local_minima": list(self.local_minima),
            "degenerate": self.degenerate,
            "reason": self.reason,
            "grid_lo": float(self.grid[0]),
            "grid_hi": float(self.grid[-1]),
            "grid_n": int(self.grid.size),
        }
        if include_curve:
            out["grid"] = self.grid.tolist()
            out["values"] = self.values.tolist()
        return out


def newton_polish(f, x: float, fx: float, lo: float, hi: float, rel_step: float = 1e-3, steps: int = 2):
    """Newton steps from a golden-section estimate using five-point differences.

    Near a flat minimum, comparisons of f are at the rounding floor and pin the
    minimiser only to ~1e-7 relative; derivative-based steps taken over a fixed
    relative stencil get well below that.  A step is kept only if it stays in
    [lo, hi] and does not increase f beyond rounding.
    """
    for _ in range(steps):
        d = rel_step * x
        f2m, f1m, f1p, f2p = (f(x + k * d) for k in (-2, -1, 1, 2))
        d1 = (f2m - 8.0 * f1m + 8.0 * f1p - f2p) / (12.0 * d)
        d2 = (-f2m + 16.0 * f1m - 30.0 * fx + 16.0 * f1p - f2p) / (12.0 * d * d)
        if not d2 > 0:
            break
        xn = x - d1 / d2
        if not lo <= xn <= hi:
            break
        fn = f(xn)
        if fn > fx + 1e-12 * abs(fx):
            break
        x, fx = xn, fn
    return x, fx


def locate_minima(f, grid: np.ndarray, values: np.ndarray, rel_xtol: float = 1e-8, polish: bool = True):
    """Refine every interior grid minimum within its two bracketing cells.

    Returns the refined minima as (x, f(x)) pairs.
    """
    minima = []
    for i in range(1, grid.size - 1):
        if values[i] < values[i - 1] and values[i] <= values[i + 1]:
            x, fx = golden_section(f, grid[i - 1], grid[i + 1], rel_xtol * grid[i])
            if polish:
                x, fx = newton_polish(f, x, fx, grid[i - 1], grid[i + 1])
            if fx > values[i]:
                x, fx = float(grid[i]), float(values[i])
            minima.append((float(x), float(fx)))
    return minima


def build_curve(
    kind: str, f, kernel_label: str, grid, zero_spread: bool = False, rel_xtol: float = 1e-8, polish: bool = True
) -> CriterionCurve:
    grid = _check_grid(grid)
    values = np.array([f(b) for b in grid])
    minima = locate_minima(f, grid, values, rel_xtol, polish)
    lowest = min([fx for _, fx in minima] + [values[-1]])
    reason = None
    if zero_spread:
        reason = "zero_spread"
    elif values[0] <= lowest:
        reason = "lower_edge"
    if reason is not None:
        minimizer, min_val = float(grid[0]), float(values[0])
    elif not minima or values[-1] < min(fx for _, fx in minima):
        minimizer, min_val = float(grid[-1]), float(values[-1])
        reason = "upper_edge"
    else:
        best = min(fx for _, fx in minima)
        near = [(x, fx) for x, fx in minima if fx - best <= TIE_RTOL * max(abs(best), 1e-300)]
        minimizer, min_val = min(near)
    return CriterionCurve(
        kind=kind,
        kernel=kernel_label,
        grid=grid,
        values=values,
        minimizer=minimizer,
        minimum_value=min_val,
        local_minima=tuple(x for x, _ in minima),
        degenerate=reason in ("zero_spread", "lower_edge"),
        reason=reason,
    )


GridLike = Union[None, GridPolicy, Sequence[float], np.ndarray]


def _resolve_grid(sample, grid: GridLike, rescale: float) -> np.ndarray:
    if grid is None:
        grid = GridPolicy()
    if isinstance(grid, GridPolicy):
        return grid.bandwidths(sample, rescale)
    return _check_grid(grid)


def oscv_curve(
    sample, L: Optional[Kernel] = None, grid: GridLike = None, cfg: QuadratureConfig = DEFAULT_CONFIG
) -> CriterionCurve:
    """OSCV criterion of a right-sided kernel over a grid of bandwidths b.

    A :class:`GridPolicy` grid is laid out on the estimation-bandwidth scale and
    divided by the smooth constant C(gaussian, L), so that it brackets b.
    """
    L = L or one_sided_gaussian()
    rescale = 1.0 / constant_smooth(gaussian(), L, cfg) if isinstance(grid, (GridPolicy, type(None))) else 1.0
    grid = _resolve_grid(sample, grid, rescale)
    ev = CriterionEvaluator(sample, L, cfg)
    return build_curve("oscv", ev, L.label, grid, ev.zero_spread)


def lscv_curve(
    sample, K: Optional[Kernel] = None, grid: GridLike = None, cfg: QuadratureConfig = DEFAULT_CONFIG
) -> CriterionCurve:
    K = K or gaussian()
    grid = _resolve_grid(sample, grid, 1.0)
    ev = CriterionEvaluator(sample, K, cfg)
    return build_curve("lscv", ev, K.label, grid, ev.zero_spread)


@dataclass(frozen=True)
class BandwidthSelection:
    raw_minimizer: float
    constant: float
    mode: str
    curve: CriterionCurve
    estimation_kernel: str
    cv_kernel: str

    @property
    def degenerate(self) -> bool:
        return self.curve.degenerate

    @property
    def bandwidth(self) -> float:
        """Final bandwidth; raises DegenerateCriterion for a degenerate curve."""
        if self.degenerate:
            raise DegenerateCriterion(
                f"{self.mode} criterion is degenerate ({self.curve.reason}); use unchecked_bandwidth to override"
            )
        return self.constant * self.raw_minimizer

    @property
    def unchecked_bandwidth(self) -> float:
        return self.constant * self.raw_minimizer

    def to_dict(self, include_curve: bool = False):
        return {
            "mode": self.mode,
            "estimation_kernel": self.estimation_kernel,
            "cv_kernel": self.cv_kernel,
            "raw_minimizer": self.raw_minimizer,
            "constant": self.constant,
            "bandwidth": self.unchecked_bandwidth,
            "degenerate": self.degenerate,
            "curve": self.curve.to_dict(include_curve),
        }


def mode_constant(mode, estimation_kernel: Kernel, cv_kernel: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    mode = Mode(mode)
    if mode is Mode.LSCV:
        return 1.0
    c = constant_smooth(estimation_kernel, cv_kernel, cfg)
    if mode is Mode.SMOOTH:
        return c
    cs = constant_nonsmooth(estimation_kernel, cv_kernel, cfg)
    if mode is Mode.NONSMOOTH:
        return cs
    bias = relative_bias(c, cs)
    if abs(bias) > ROBUST_TOLERANCE_PERCENT:
        raise NotRobustKernel(f"{cv_kernel.label} has E_C = {bias:.4g}% (robust mode needs |E_C| <= 0.1%)")
    return c


def default_cv_kernel(mode) -> Kernel:
    return make_LI(ROBUST_LI) if Mode(mode) is Mode.ROBUST else one_sided_gaussian()


def selection_from_curve(
    curve: CriterionCurve, mode, estimation_kernel: Kernel, cv_kernel: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG
) -> BandwidthSelection:
    mode = Mode(mode)
    constant = mode_constant(mode, estimation_kernel, cv_kernel, cfg)
    return BandwidthSelection(
        curve.minimizer, constant, mode.value, curve, estimation_kernel.label,
        estimation_kernel.label if mode is Mode.LSCV else cv_kernel.label,
    )


def select(
    sample,
    mode="smooth",
    cv_kernel: Optional[Kernel] = None,
    estimation_kernel: Optional[Kernel] = None,
    grid_policy: GridLike = None,
    cfg: QuadratureConfig = DEFAULT_CONFIG,
) -> BandwidthSelection:
    """Select a bandwidth for the Gaussian (or given) estimation kernel.

    ``smooth``/``nonsmooth`` rescale the OSCV minimiser by C/C*, ``robust``
    requires a cv kernel with |E_C| <= 0.1%, ``lscv`` ignores the cv kernel.
    """
    mode = Mode(mode)
    K = estimation_kernel or gaussian()
    if mode is Mode.LSCV:
        curve = lscv_curve(sample, K, grid_policy, cfg)
        return selection_from_curve(curve, mode, K, K, cfg)
    L = cv_kernel or default_cv_kernel(mode)
    constant = mode_constant(mode, K, L, cfg)  # fail fast on a non-robust kernel
    curve = oscv_curve(sample, L, grid_policy, cfg)
    return BandwidthSelection(curve.minimizer, constant, mode.value, curve, K.label, L.label)
