"""Rescaling constants that turn a one-sided CV bandwidth into an estimation bandwidth."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .errors import DegenerateKernel, InvalidParam, QuadratureFailure
from .functionals import DEFAULT_CONFIG, QuadratureConfig, b_functional, roughness, second_moment
from .kernels import Kernel, LIParams, gaussian, make_base_kernel, make_LI, make_one_sided

REFINE_TARGET = 0.01


@lru_cache(maxsize=512)
def _R(g: Kernel, cfg: QuadratureConfig) -> float:
    return roughness(g, cfg)


@lru_cache(maxsize=512)
def _mu2(g: Kernel, cfg: QuadratureConfig) -> float:
    return second_moment(g, cfg)


@lru_cache(maxsize=512)
def _B(g: Kernel, cfg: QuadratureConfig) -> float:
    return b_functional(g, cfg)


def constant_smooth(K: Kernel, L: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """C = (R(K)/R(L) * mu2(L)^2/mu2(K)^2)^(1/5)."""
    RK, RL, mK, mL = _R(K, cfg), _R(L, cfg), _mu2(K, cfg), _mu2(L, cfg)
    if mK == 0.0 or RL == 0.0:
        raise DegenerateKernel(f"mu2({K.label}) or R({L.label}) vanishes")
    return ((RK / RL) * (mL * mL) / (mK * mK)) ** 0.2


def constant_nonsmooth(K: Kernel, L: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """C* = (R(K)/B(K) * B(L)/R(L))^(1/4)."""
    RK, RL = _R(K, cfg), _R(L, cfg)
    BK, BL = _B(K, cfg), _B(L, cfg)
    if BK == 0.0 or RL == 0.0:
        raise DegenerateKernel(f"B({K.label}) or R({L.label}) vanishes")
    return ((RK / BK) * (BL / RL)) ** 0.25


def relative_bias(c_smooth: float, c_nonsmooth: float) -> float:
    """E_C in percent: positive when the smooth constant oversmooths a nonsmooth target."""
    if c_nonsmooth == 0:
        raise ZeroDivisionError("nonsmooth constant is zero")
    return (c_smooth / c_nonsmooth - 1.0) * 100.0


@dataclass(frozen=True)
class ConstantsRecord:
    estimation_kernel: str
    cv_kernel: str
    c_smooth: float
    c_nonsmooth: float
    e_c_percent: float

    def as_dict(self):
        return {
            "estimation_kernel": self.estimation_kernel,
            "cv_kernel": self.cv_kernel,
            "c_smooth": self.c_smooth,
            "c_nonsmooth": self.c_nonsmooth,
            "e_c_percent": self.e_c_percent,
        }


def constants_record(K: Kernel, L: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> ConstantsRecord:
    c = constant_smooth(K, L, cfg)
    cs = constant_nonsmooth(K, L, cfg)
    return ConstantsRecord(K.label, L.label, c, cs, relative_bias(c, cs))


def standard_pairs() -> List[Tuple[Kernel, Kernel]]:
    """(K, L) pairs with L the one-sided version of K, for the three usual kernels."""
    names = ("epanechnikov", "quartic", "gaussian")
    return [(make_base_kernel(n), make_one_sided(make_base_kernel(n))) for n in names]


def e_c(L: Kernel, K: Optional[Kernel] = None, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    K = K or gaussian()
    return relative_bias(constant_smooth(K, L, cfg), constant_nonsmooth(K, L, cfg))


@dataclass(frozen=True)
class ScanPoint:
    params: LIParams
    e_c_percent: float
    refined: bool = False


@dataclass
class ScanResult:
    points: List[ScanPoint]
    skipped: List[Tuple[float, float, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _axis(rng: Sequence[float], step: float) -> np.ndarray:
    lo, hi = float(rng[0]), float(rng[1])
    if hi < lo:
        raise InvalidParam(f"empty range {rng}")
    if not step > 0:
        raise InvalidParam("grid steps must be positive")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def scan_robust(
    alpha_range: Sequence[float],
    sigma_range: Sequence[float],
    alpha_step: float,
    sigma_step: float,
    threshold_percent: float = 5.0,
    cfg: QuadratureConfig = DEFAULT_CONFIG,
    K: Optional[Kernel] = None,
) -> ScanResult:
    """Search the LI family for kernels with |E_C| <= threshold.

    Within each sigma row, a sign change of E_C between neighbouring alpha
    values is refined by Brent root finding in alpha until |E_C| < 0.01.
    Parameterisations with c = 0 or failed quadrature are skipped and listed.
    """
    K = K or gaussian()
    alphas = _axis(alpha_range, alpha_step)
    sigmas = _axis(sigma_range, sigma_step)
    points: List[ScanPoint] = []
    skipped: List[Tuple[float, float, str]] = []

    def ec_at(alpha, sigma):
        return e_c(make_LI(LIParams(float(alpha), float(sigma))), K, cfg)

    for sigma in sigmas:
        row = []
        for alpha in alphas:
            try:
                val = ec_at(alpha, sigma)
            except (DegenerateKernel, QuadratureFailure, ZeroDivisionError) as exc:
                skipped.append((float(alpha), float(sigma), f"{type(exc).__name__}: {exc}"))
                row.append(None)
                continue
            row.append(val)
            if abs(val) <= threshold_percent:
                points.append(ScanPoint(LIParams(float(alpha), float(sigma)), val))
        for i in range(len(alphas) - 1):
            lo_val, hi_val = row[i], row[i + 1]
            if lo_val is None or hi_val is None or lo_val == 0.0 or np.sign(lo_val) == np.sign(hi_val):
                continue
            try:
                root = optimize.brentq(lambda a: ec_at(a, sigma), alphas[i], alphas[i + 1], xtol=1e-12, rtol=1e-14)
                val = ec_at(root, sigma)
            except (DegenerateKernel, QuadratureFailure, ZeroDivisionError, ValueError) as exc:
                skipped.append((float(alphas[i]), float(sigma), f"refinement failed: {exc}"))
                continue
            # a sign change across a pole of E_C (c -> 0) is not a root
            if abs(val) < REFINE_TARGET and abs(val) <= threshold_percent:
                points.append(ScanPoint(LIParams(float(root), float(sigma)), val, refined=True))
            else:
                skipped.append((float(root), float(sigma), f"sign change is not a root (E_C = {val:.4g})"))

    points.sort(key=lambda p: (abs(p.e_c_percent), p.params.alpha, p.params.sigma))
    return ScanResult(points, skipped)
