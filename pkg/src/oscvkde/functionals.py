"""Integral functionals of kernels: mu2, R, D_g, G_g and B.

All integrals go through adaptive Gauss-Kronrod quadrature (QUADPACK via
scipy).  Lack of convergence is an error, never a silent fallback.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import InvalidParam, NonIntegrableTail, QuadratureFailure
from .kernels import TRUNCATION_BOUND, Kernel

CONFIG_ENV_VAR = "OSCVKDE_QUADRATURE_CONFIG"

B_GRID_POINTS = 2048
TAIL_LIMIT = 1e-10
_QUAD_LIMIT = 500

# 10-point Gauss-Legendre rule used by the grid cache, on [-1, 1].
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    truncation_bound: float = TRUNCATION_BOUND
    outer_grid_max: float = 12.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InvalidParam("quadrature tolerances must be positive")
        if not self.truncation_bound > 0:
            raise InvalidParam("truncation_bound must be positive")
        if self.outer_grid_max < self.truncation_bound:
            raise InvalidParam("outer_grid_max must be at least truncation_bound")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "QuadratureConfig":
        with open(path) as fh:
            data = json.load(fh)
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidParam(f"bad quadrature config {path}: {exc}") from None

    @classmethod
    def from_env(cls) -> "QuadratureConfig":
        """Config read from the file named by $OSCVKDE_QUADRATURE_CONFIG, else defaults."""
        path = os.environ.get(CONFIG_ENV_VAR)
        return cls.from_file(path) if path else cls()


DEFAULT_CONFIG = QuadratureConfig()


def quad(f, a, b, cfg: QuadratureConfig = DEFAULT_CONFIG, points=None) -> float:
    """Adaptive integral of ``f`` over [a, b]; raises QuadratureFailure on non-convergence."""
    # with full_output, scipy appends a message element only when ier != 0
    if a == b:
        return 0.0
    if points is not None:
        points = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(
            f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, points=points, full_output=1,
            limit=max(_QUAD_LIMIT, 4 * len(points or ())),
        )
    val, err = out[0], out[1]
    if not math.isfinite(val):
        raise QuadratureFailure(f"non-finite integral over [{a}, {b}]")
    if len(out) > 3 and err > 10 * max(cfg.abs_tol, cfg.rel_tol * abs(val)):
        raise QuadratureFailure(f"quadrature did not converge over [{a}, {b}]: {out[3].splitlines()[0]}")
    return float(val)


def _range(g: Kernel, cfg: QuadratureConfig):
    return g.effective_support(cfg.truncation_bound)


def _breaks(g: Kernel):
    lo, hi = g.support
    return [0.0] if lo < 0.0 < hi else None


def roughness(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """R(g), the integral of g squared."""
    lo, hi = _range(g, cfg)
    return quad(lambda u: g.func(u) ** 2, lo, hi, cfg, _breaks(g))


def second_moment(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """mu2(g), the integral of u^2 g(u)."""
    lo, hi = _range(g, cfg)
    return quad(lambda u: u * u * g.func(u), lo, hi, cfg, _breaks(g))


def total_mass(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    lo, hi = _range(g, cfg)
    return quad(g.func, lo, hi, cfg, _breaks(g))


def first_moment(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    lo, hi = _range(g, cfg)
    return quad(lambda u: u * g.func(u), lo, hi, cfg, _breaks(g))


def partial_mass(g: Kernel, z: float, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """D_g(z): mass of g to the left of z."""
    lo, hi = _range(g, cfg)
    if z <= lo:
        return 0.0
    return quad(g.func, lo, min(z, hi), cfg, _breaks(g))


def partial_first_moment(g: Kernel, z: float, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """G_g(z): first moment of g to the left of z."""
    lo, hi = _range(g, cfg)
    if z <= lo:
        return 0.0
    return quad(lambda u: u * g.func(u), lo, min(z, hi), cfg, _breaks(g))


class PrimitiveGrid:
    """D_g and G_g tabulated on a uniform grid over the truncated support.

    Cell integrals use a 10-point Gauss-Legendre rule.  Between nodes the
    primitive is the node value plus the same rule applied to the partial
    cell, which stays accurate when the kernel is narrow relative to the grid.
    """

    def __init__(self, g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG, points: int = B_GRID_POINTS):
        lo, hi = _range(g, cfg)
        nodes = np.linspace(lo, hi, points)
        self.lo, self.hi = lo, hi
        self.compact_hi = math.isfinite(g.support[1])
        self._func = g.func
        self._nodes = nodes
        mass, moment = self._cells(nodes[:-1], nodes[1:])
        self._D_nodes = np.concatenate([[0.0], np.cumsum(mass)])
        self._G_nodes = np.concatenate([[0.0], np.cumsum(moment)])

    def _cells(self, a, b):
        half = 0.5 * (b - a)
        x = (a + half)[..., None] + half[..., None] * _GL_NODES
        gx = self._func(x)
        return half * (gx @ _GL_WEIGHTS), half * ((x * gx) @ _GL_WEIGHTS)

    def _primitives(self, z):
        z = np.clip(np.asarray(z, dtype=float), self.lo, self.hi)
        k = np.clip(np.searchsorted(self._nodes, z, side="right") - 1, 0, self._nodes.size - 2)
        mass, moment = self._cells(self._nodes[k], z)
        return self._D_nodes[k] + mass, self._G_nodes[k] + moment

    def D(self, z):
        z = np.asarray(z, dtype=float)
        out = np.where(z <= self.lo, 0.0, self._primitives(z)[0])
        if self.compact_hi:
            out = np.where(z >= self.hi, 1.0, out)
        return out

    def G(self, z):
        z = np.asarray(z, dtype=float)
        out = np.where(z <= self.lo, 0.0, self._primitives(z)[1])
        if self.compact_hi:
            out = np.where(z >= self.hi, 0.0, out)
        return out


@lru_cache(maxsize=128)
def primitive_grid(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG) -> PrimitiveGrid:
    return PrimitiveGrid(g, cfg)


def b_integrands(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG, method: str = "grid"):
    """The two outer integrands of B(g), as functions of z >= 0."""
    if method == "grid":
        grid = primitive_grid(g, cfg)
        D, G = grid.D, grid.G
    elif method == "direct":
        D = lambda z: partial_mass(g, z, cfg)  # noqa: E731
        G = lambda z: partial_first_moment(g, z, cfg)  # noqa: E731
    else:
        raise InvalidParam(f"unknown method {method!r}")

    def right(z):
        return float((z * (1.0 - D(z)) + G(z)) ** 2)

    def left(z):
        return float((z * D(-z) + G(-z)) ** 2)

    return right, left


def b_functional(g: Kernel, cfg: QuadratureConfig = DEFAULT_CONFIG, method: str = "grid") -> float:
    """B(g), the bias functional of the nonsmooth AMISE expansion.

    ``method="direct"`` evaluates D_g and G_g by nested quadrature at every
    outer point instead of using the cached grid (slow; for cross-checks).
    """
    lo, hi = g.support
    right, left = b_integrands(g, cfg, method)
    reach = cfg.outer_grid_max * g.tail_scale
    eff_lo, eff_hi = _range(g, cfg)

    total = 0.0
    for integrand, side_end in ((right, hi), (left, -lo)):
        if side_end <= 0.0:
            # a one-sided kernel has D(-z) = G(-z) = 0 for z > 0
            continue
        if math.isfinite(side_end):
            upper, pts = side_end, None
        else:
            upper = reach
            tail = integrand(upper)
            if tail > TAIL_LIMIT:
                raise NonIntegrableTail(f"B({g.label}) integrand at z={upper:g} is {tail:.3g}")
            pts = [eff_hi if integrand is right else -eff_lo]
        total += quad(integrand, 0.0, upper, cfg, pts)
    return total
