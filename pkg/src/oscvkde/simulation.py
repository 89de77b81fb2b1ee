"""Test densities, ISE machinery, nonsmooth asymptotics and the Monte Carlo study."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from .errors import DegenerateJumps, InvalidBandwidth, InvalidParam, InvalidSpec, OSCVError, SmoothDensity
from .functionals import DEFAULT_CONFIG, QuadratureConfig, quad
from .kernels import Kernel, gaussian, kernel_from_label
from .rescaling import _B, _R
from .selection import (
    GridPolicy,
    Mode,
    build_curve,
    check_sample,
    default_cv_kernel,
    oscv_curve,
    lscv_curve,
    selection_from_curve,
)

ISE_PAD = 6.0
ISE_GRID = GridPolicy(num=41)
_QUANTILE_ITERATIONS = 80


class NormalDensity:
    """N(loc, scale^2); smooth, so it has no cusps."""

    cusps: Tuple[Tuple[float, float], ...] = ()

    def __init__(self, loc: float = 0.0, scale: float = 1.0, label: str = "normal"):
        if not scale > 0:
            raise InvalidSpec("normal scale must be positive")
        self.loc, self.scale, self.label = float(loc), float(scale), label
        self._dist = stats.norm(self.loc, self.scale)

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def quantile(self, p):
        return self._dist.ppf(p)

    @property
    def support(self) -> Tuple[float, float]:
        return (self.loc - 12.0 * self.scale, self.loc + 12.0 * self.scale)

    def smoothed_pdf(self, x, h: float):
        """(phi_h * f)(x), the density convolved with a N(0, h^2) kernel."""
        return stats.norm.pdf(x, self.loc, math.hypot(self.scale, h))

    def roughness(self, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
        return 1.0 / (2.0 * self.scale * math.sqrt(math.pi))

    def affine(self, a: float, c: float) -> "NormalDensity":
        """Density of a X + c for a > 0."""
        return NormalDensity(a * self.loc + c, a * self.scale, f"{self.label}*{a:g}+{c:g}")

    def to_spec(self):
        return {"family": "normal", "loc": self.loc, "scale": self.scale, "label": self.label}


class LaplaceMixture:
    """Mixture of Laplace densities w_j/(2 s_j) exp(-|x - m_j| / s_j).

    Each location is a cusp with derivative jump -w_j / s_j^2 (jumps of
    coinciding locations add up).  The cdf is closed-form; quantiles are found
    by vectorised bisection on it.
    """

    def __init__(self, weights, locations, scales, label: str = "laplace_mixture"):
        w = np.asarray(weights, dtype=float)
        m = np.asarray(locations, dtype=float)
        s = np.asarray(scales, dtype=float)
        if not (w.ndim == m.ndim == s.ndim == 1 and w.size == m.size == s.size and w.size > 0):
            raise InvalidSpec("weights, locations and scales must be equal-length lists")
        if np.any(w < 0) or np.any(s <= 0) or not np.all(np.isfinite(np.concatenate([w, m, s]))):
            raise InvalidSpec("weights must be nonnegative and scales positive")
        if not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise InvalidSpec(f"weights sum to {w.sum()}, not 1")
        self.weights, self.locations, self.scales, self.label = w / w.sum(), m, s, label
        jumps: Dict[float, float] = {}
        for wj, mj, sj in zip(self.weights, m, s):
            if wj > 0:
                jumps[float(mj)] = jumps.get(float(mj), 0.0) - wj / sj**2
        self.cusps = tuple(sorted(jumps.items()))
        self._roughness: Optional[float] = None

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.abs(x[..., None] - self.locations) / self.scales
        return (self.weights / (2.0 * self.scales) * np.exp(-z)).sum(axis=-1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.locations) / self.scales
        half = 0.5 * np.exp(-np.abs(z))
        return (self.weights * np.where(z < 0, half, 1.0 - half)).sum(axis=-1)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        lo = np.full(p.shape, float(np.min(self.locations - 60.0 * self.scales)))
        hi = np.full(p.shape, float(np.max(self.locations + 60.0 * self.scales)))
        for _ in range(_QUANTILE_ITERATIONS):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def smoothed_pdf(self, x, h: float):
        """(phi_h * f)(x), the density convolved with a N(0, h^2) kernel."""
        t = np.asarray(x, dtype=float)[..., None] - self.locations
        s = self.scales
        total = 0.0
        for sign in (-1.0, 1.0):
            a = (h / s + sign * t / h) / math.sqrt(2.0)
            # exp(h^2/(2 s^2) + sign t/s) erfc(a) without overflow
            safe = np.maximum(a, 0.0)
            with np.errstate(over="ignore", under="ignore"):
                term = np.where(
                    a >= 0.0,
                    special.erfcx(safe) * np.exp(-0.5 * (t / h) ** 2),
                    np.exp(np.minimum(0.5 * (h / s) ** 2 + sign * t / s, 0.0)) * special.erfc(a),
                )
            total = total + term
        return (self.weights / (4.0 * s) * total).sum(axis=-1)

    def roughness(self, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
        """Integral of f squared (cached per instance)."""
        if self._roughness is None:
            lo, hi = self.support
            self._roughness = quad(lambda t: float(self.pdf(t)) ** 2, lo, hi, cfg, [c for c, _ in self.cusps])
        return self._roughness

    @property
    def support(self) -> Tuple[float, float]:
        return (
            float(np.min(self.locations - 40.0 * self.scales)),
            float(np.max(self.locations + 40.0 * self.scales)),
        )

    def affine(self, a: float, c: float) -> "LaplaceMixture":
        if not a > 0:
            raise InvalidParam("affine scale must be positive")
        return LaplaceMixture(self.weights, a * self.locations + c, a * self.scales, f"{self.label}*{a:g}+{c:g}")

    def to_spec(self):
        return {
            "family": "laplace_mixture",
            "weights": self.weights.tolist(),
            "locations": self.locations.tolist(),
            "scales": self.scales.tolist(),
            "label": self.label,
        }


TestDensity = object  # NormalDensity | LaplaceMixture; any object with the same members works


def _bundled(name: str) -> dict:
    text = resources.files("oscvkde").joinpath("data", f"{name}.json").read_text()
    return json.loads(text)


def make_density(spec):
    """Build a test density.

    ``spec`` is ``"normal"``, ``"laplace"`` (standard Laplace), ``"cusped7"``
    (the bundled 7-cusp mixture), a path to a JSON mixture file, or a mapping
    with ``weights``, ``locations`` and ``scales`` (optionally ``label``).
    """
    if isinstance(spec, (NormalDensity, LaplaceMixture)):
        return spec
    if isinstance(spec, str):
        if spec == "normal":
            return NormalDensity()
        if spec == "laplace":
            return LaplaceMixture([1.0], [0.0], [1.0], "laplace")
        if spec == "cusped7":
            return make_density(_bundled("cusped7"))
        path = Path(spec)
        if path.suffix == ".json" and path.exists():
            return make_density(json.loads(path.read_text()))
        raise InvalidSpec(f"unknown density {spec!r}")
    if isinstance(spec, dict):
        if spec.get("family") == "normal":
            return NormalDensity(spec.get("loc", 0.0), spec.get("scale", 1.0), spec.get("label", "normal"))
        try:
            return LaplaceMixture(
                spec["weights"], spec["locations"], spec["scales"], spec.get("label", "laplace_mixture")
            )
        except KeyError as exc:
            raise InvalidSpec(f"mixture spec lacks {exc}") from None
    raise InvalidSpec(f"cannot build a density from {type(spec).__name__}")


def sample_density(d, n: int, seed) -> np.ndarray:
    """n draws by inverse-transform sampling; deterministic given ``seed``."""
    if n < 2:
        raise InvalidParam("sample size must be at least 2")
    rng = np.random.default_rng(seed)
    return np.asarray(d.quantile(rng.random(n)), dtype=float)


class _SortedKDE:
    # kde restricted to observations within the kernel's reach; scalar x only
    def __init__(self, x: np.ndarray, h: float, K: Kernel, cfg: QuadratureConfig):
        self.x, self.h, self.func, self.K = np.sort(x), h, K.func, K
        lo, hi = K.effective_support(cfg.truncation_bound)
        self.left, self.right = -hi * h, -lo * h  # x - X in [lo h, hi h]
        self.norm = 1.0 / (x.size * h)

    def __call__(self, t: float) -> float:
        i0 = np.searchsorted(self.x, t + self.left, side="left")
        i1 = np.searchsorted(self.x, t + self.right, side="right")
        if i1 <= i0:
            return 0.0
        u = (t - self.x[i0:i1]) / self.h
        lo, hi = self.K.support
        u = u[(u >= lo) & (u <= hi)]
        return self.norm * float(np.sum(self.func(u)))


def _gaussian_pair_sum(x: np.ndarray, scale: float) -> float:
    # sum over all ordered pairs (i, j) of phi_scale(x_i - x_j)
    total = 0.0
    for start in range(0, x.size, 512):
        diff = x[start : start + 512, None] - x[None, :]
        total += float(np.exp(-0.5 * (diff / scale) ** 2).sum())
    return total / (scale * math.sqrt(2.0 * math.pi))


def _ise_closed_form(d, x: np.ndarray, h: float, cfg: QuadratureConfig) -> float:
    n = x.size
    fhat_sq = _gaussian_pair_sum(x, math.sqrt(2.0) * h) / (n * n)
    cross = float(np.mean(d.smoothed_pdf(x, h)))
    return max(fhat_sq - 2.0 * cross + d.roughness(cfg), 0.0)


def ise(
    d, sample, h: float, K: Optional[Kernel] = None, cfg: QuadratureConfig = DEFAULT_CONFIG, method: str = "auto"
) -> float:
    """Integrated squared error of the KDE against the true density.

    With the Gaussian kernel and a density that provides ``smoothed_pdf``
    (both built-in families do), ``method="auto"`` uses the exact expansion
    R(fhat) - 2 E_fhat[f] + R(f); otherwise, or with ``method="quadrature"``,
    the squared difference is integrated adaptively with breakpoints at cusps.
    """
    if not h > 0:
        raise InvalidBandwidth(f"bandwidth must be positive, got {h}")
    if method not in ("auto", "quadrature"):
        raise InvalidParam(f"unknown ise method {method!r}")
    K = K or gaussian()
    x = check_sample(sample)
    if method == "auto" and K.label == "gaussian" and hasattr(d, "smoothed_pdf"):
        return _ise_closed_form(d, x, h, cfg)
    fhat = _SortedKDE(x, h, K, cfg)
    pdf = d.pdf
    dlo, dhi = d.support
    pad = ISE_PAD * h
    a, b = min(dlo, x.min() - pad), max(dhi, x.max() + pad)
    pts = {dlo, dhi, x.min() - pad, x.max() + pad, *(c for c, _ in d.cusps)}
    # the estimate has kinks or jumps wherever a finite kernel support end sits
    for end in K.support:
        if math.isfinite(end):
            pts.update((x + end * h).tolist())
    pts = sorted(pts)
    return quad(lambda t: (fhat(t) - float(pdf(t))) ** 2, a, b, cfg, pts)


@dataclass(frozen=True)
class IseOptimum:
    bandwidth: float
    ise: float
    degenerate: bool
    reason: Optional[str]


def ise_optimal_bandwidth(
    d, sample, K: Optional[Kernel] = None, grid_policy: GridPolicy = ISE_GRID, cfg: QuadratureConfig = DEFAULT_CONFIG
) -> IseOptimum:
    """ISE minimiser h0: grid scan, then golden-section refinement."""
    K = K or gaussian()
    x = check_sample(sample)
    grid = grid_policy.bandwidths(x) if isinstance(grid_policy, GridPolicy) else grid_policy
    curve = build_curve("ise", lambda h: ise(d, x, h, K, cfg), K.label, grid)
    return IseOptimum(curve.minimizer, curve.minimum_value, curve.degenerate, curve.reason)


def _jump_sum(d) -> float:
    if not d.cusps:
        raise SmoothDensity(f"{d.label} has no cusps")
    total = float(sum(j * j for _, j in d.cusps))
    if total == 0.0:
        raise DegenerateJumps(f"{d.label} has only zero derivative jumps")
    return total


def amise_nonsmooth(d, K: Kernel, h: float, n: int, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """R(K)/(n h) + h^3 B(K) * sum of squared derivative jumps."""
    if not d.cusps:
        raise SmoothDensity(f"{d.label} has no cusps")
    jumps = float(sum(j * j for _, j in d.cusps))
    return _R(K, cfg) / (n * h) + h**3 * _B(K, cfg) * jumps


def h_star(d, K: Kernel, n: int, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Minimiser of :func:`amise_nonsmooth`: (R(K) / (3 B(K) J))^(1/4) n^(-1/4)."""
    jumps = _jump_sum(d)
    return (_R(K, cfg) / (3.0 * _B(K, cfg) * jumps)) ** 0.25 * n ** (-0.25)


def normal_reference_bandwidth(n: int, scale: float = 1.0) -> float:
    """MISE-optimal Gaussian-kernel bandwidth for a normal target, (4/3)^(1/5) s n^(-1/5)."""
    return (4.0 / 3.0) ** 0.2 * scale * n ** (-0.2)


# ---------------------------------------------------------------------------
# Monte Carlo study
# ---------------------------------------------------------------------------

METHOD_MODES = {
    "lscv": Mode.LSCV,
    "oscv_smooth": Mode.SMOOTH,
    "oscv_nonsmooth": Mode.NONSMOOTH,
    "oscv_robust": Mode.ROBUST,
}


def parse_method(spec: str) -> Tuple[str, Mode, Optional[str]]:
    """``name`` or ``name:<kernel label>``, e.g. ``oscv_robust:LI:0.4275:10``."""
    name, _, label = spec.partition(":")
    if name not in METHOD_MODES:
        raise InvalidSpec(f"unknown method {spec!r}")
    if label and name == "lscv":
        raise InvalidSpec("lscv takes no cv kernel")
    return name, METHOD_MODES[name], label or None


def replication_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def run_replication(density_spec: dict, n: int, methods: Sequence[str], master_seed: int, index: int,
                    cfg: QuadratureConfig = DEFAULT_CONFIG) -> dict:
    d = make_density(density_spec)
    seed = replication_seed(master_seed, index)
    record = {"index": index, "seed": seed}
    try:
        x = sample_density(d, n, seed)
        K = gaussian()
        opt = ise_optimal_bandwidth(d, x, K, ISE_GRID, cfg)
        record.update(h0=opt.bandwidth, ise_h0=opt.ise, h0_degenerate=opt.degenerate)
        curves = {}
        out = {}
        for spec in methods:
            name, mode, label = parse_method(spec)
            if mode is Mode.LSCV:
                key = ("lscv", K.label)
                if key not in curves:
                    curves[key] = lscv_curve(x, K, None, cfg)
                L = K
            else:
                L = kernel_from_label(label) if label else default_cv_kernel(mode)
                key = ("oscv", L.label)
                if key not in curves:
                    curves[key] = oscv_curve(x, L, None, cfg)
            sel = selection_from_curve(curves[key], mode, K, L, cfg)
            entry = {
                "raw_minimizer": sel.raw_minimizer,
                "constant": sel.constant,
                "bandwidth": sel.unchecked_bandwidth,
                "degenerate": sel.degenerate,
                "ise": None,
            }
            if not sel.degenerate:
                entry["ise"] = ise(d, x, sel.unchecked_bandwidth, K, cfg)
            out[spec] = entry
        record["methods"] = out
    except OSCVError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def aggregate(records: Sequence[dict], methods: Sequence[str]):
    """Median-based Delta_B and Delta_ISE (percent) per method.

    M(h0) is taken over replications with a usable h0; a method's bandwidth
    median over its non-degenerate selections; the ISE ratio median over
    replications where both are usable.
    """
    ok = [r for r in records if "error" not in r and not r["h0_degenerate"]]
    h0_median = float(np.median([r["h0"] for r in ok])) if ok else math.nan
    delta_b, delta_ise, excluded = {}, {}, {}
    for m in methods:
        used = [r for r in ok if not r["methods"][m]["degenerate"]]
        excluded[m] = len(records) - len(used)
        if not used:
            delta_b[m] = delta_ise[m] = None
            continue
        hb = float(np.median([r["methods"][m]["bandwidth"] for r in used]))
        ratios = [(r["methods"][m]["ise"] - r["ise_h0"]) / r["ise_h0"] for r in used]
        delta_b[m] = (hb - h0_median) / h0_median * 100.0
        delta_ise[m] = float(np.median(ratios)) * 100.0
    return delta_b, delta_ise, excluded


@dataclass
class SimulationReport:
    density: dict
    n: int
    replications: int
    seed: int
    methods: List[str]
    records: List[dict]
    delta_b: Dict[str, Optional[float]]
    delta_ise: Dict[str, Optional[float]]
    excluded: Dict[str, int]
    failures: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "density": self.density,
            "n": self.n,
            "replications": self.replications,
            "seed": self.seed,
            "methods": list(self.methods),
            "delta_b": self.delta_b,
            "delta_ise": self.delta_ise,
            "excluded": self.excluded,
            "failures": self.failures,
            "records": self.records,
            **self.extra,
        }

    def median_bandwidth(self, method: str) -> float:
        vals = [
            r["methods"][method]["bandwidth"]
            for r in self.records
            if "error" not in r and not r["methods"][method]["degenerate"]
        ]
        return float(np.median(vals))


def monte_carlo_study(
    d,
    n: int,
    reps: int,
    methods: Sequence[str] = ("lscv", "oscv_smooth", "oscv_nonsmooth"),
    seed: int = 0,
    cfg: QuadratureConfig = DEFAULT_CONFIG,
    workers: int = 1,
) -> SimulationReport:
    """Replicate sampling and bandwidth selection; replication i uses seed f(seed, i).

    Results do not depend on ``workers``: each replication is self-contained
    and records are folded in index order.
    """
    if reps < 1:
        raise InvalidParam("reps must be at least 1")
    d = make_density(d)
    methods = list(methods)
    for m in methods:
        parse_method(m)
    spec = d.to_spec()
    args = [(spec, n, methods, seed, i, cfg) for i in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_replication, *zip(*args)))
    else:
        records = [run_replication(*a) for a in args]
    delta_b, delta_ise, excluded = aggregate(records, methods)
    failures = sum(1 for r in records if "error" in r)
    return SimulationReport(spec, n, reps, seed, methods, records, delta_b, delta_ise, excluded, failures)
