"""Fixed-point computation, excess-risk bounds, convergence-rate analysis,
and the soft-sparsity study of how the norm parameter p shifts the bound.

The quantities here sit on top of the truncation-level local complexity
bound: its fixed point r* drives the excess-risk rate n^(-alpha/(1+alpha)),
and the p-dependent prefactor nu_p explains when a small, intermediate, or
large p wins.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import MklClass, as_exponent, power_norm
from .spectra import AlgebraicSpectrum, ExplicitSpectrum, SpectrumSet
from .bounds import t_candidates

__all__ = [
    "RiskParams",
    "SoftSparseBayes",
    "RateSpec",
    "fixed_point_quadratic",
    "FixedPointResult",
    "fixed_point_bound",
    "optimal_truncation",
    "rate_ratio_factor",
    "ExcessRiskReport",
    "excess_risk_bound",
    "excess_from_fixed_point",
    "nu_factor",
    "bayes_radius",
    "NuCurve",
    "nu_curve",
    "RateComparison",
    "rate_comparison",
    "PhaseTransition",
    "phase_transition_locator",
    "fit_loglog_slope",
]


@dataclass(frozen=True)
class RiskParams:
    """Excess-risk bound inputs: kernel sup bound B, loss Lipschitz constant
    L, variance-dominance constant F, sample size n, confidence exponent
    x_conf, and the loss range (a, b)."""

    B: float
    L: float
    F: float
    n: int
    x_conf: float
    loss_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        for name in ("B", "L", "F", "x_conf"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        a, b = self.loss_range
        if not b > a:
            raise ValueError(f"loss range needs b > a, got ({a}, {b})")
        object.__setattr__(self, "loss_range", (float(a), float(b)))


@dataclass(frozen=True)
class SoftSparseBayes:
    """Reference hypothesis whose block norms decay as m^(-beta), m=1..M."""

    beta: float
    M: int

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    def block_profile(self) -> np.ndarray:
        m = np.arange(1, self.M + 1, dtype=float)
        return m ** (-self.beta)


class RateSpec:
    """Per-kernel algebraic decay parameters lam_j^(m) <= d_m j^(-alpha_m)."""

    def __init__(self, d, alpha):
        d = np.atleast_1d(np.asarray(d, dtype=float))
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if d.shape != alpha.shape or d.ndim != 1 or d.size == 0:
            raise ValueError("d and alpha must be matching nonempty vectors")
        if d.min() <= 0.0:
            raise ValueError("every d_m must be positive")
        if alpha.min() <= 1.0:
            raise ValueError("every alpha_m must exceed 1")
        d.setflags(write=False)
        alpha.setflags(write=False)
        self.d = d
        self.alpha = alpha

    @classmethod
    def uniform(cls, d: float, alpha: float, M: int) -> "RateSpec":
        return cls(np.full(M, d), np.full(M, alpha))

    @property
    def M(self) -> int:
        return self.d.size

    @property
    def d_max(self) -> float:
        return float(self.d.max())

    @property
    def alpha_min(self) -> float:
        return float(self.alpha.min())


def fixed_point_quadratic(a: float, b: float) -> float:
    """Largest root of r^2 - (a + 2b) r + b^2 = 0, i.e. the fixed point of
    r = sqrt(a r) + b; satisfies r* <= a + 2b.

    Returns 0 (with a warning) in the degenerate case a = b = 0.
    """
    if a < 0.0 or b < 0.0:
        raise ValueError("a and b must be nonnegative")
    if a == 0.0 and b == 0.0:
        warnings.warn("degenerate fixed point: a = b = 0", stacklevel=2)
        return 0.0
    return 0.5 * ((a + 2.0 * b) + math.sqrt(a * a + 4.0 * a * b))


def optimal_truncation(rate: RateSpec, cls: MklClass, rp: RiskParams,
                       t) -> np.ndarray:
    """Continuous optimal truncation levels for algebraic spectra:

        h_m = (4 d_m e t*^2 D^2 F^-2 L^2 M^(2/t* - 2) n)^(1/(1 + alpha_m)).

    Integer refinement is the caller's concern.
    """
    ts = as_exponent(t).p_star
    if math.isinf(ts):
        raise ValueError("optimal truncation needs a finite conjugate t*")
    base = (4.0 * rate.d * math.e * ts ** 2 * cls.D ** 2 * rp.F ** -2
            * rp.L ** 2 * float(cls.M) ** (2.0 / ts - 2.0) * rp.n)
    return base ** (1.0 / (1.0 + rate.alpha))


class FixedPointResult(NamedTuple):
    r_star: float
    h_used: tuple
    t_used: float


def _fixed_point_objective(cls: MklClass, spec: SpectrumSet, rp: RiskParams,
                           h: np.ndarray, ts: float) -> float:
    tails = spec.tail_sums(h)
    first = 4.0 * rp.F ** 2 * float(np.sum(h)) / rp.n
    second = 8.0 * rp.F * rp.L * math.sqrt(
        math.e * ts ** 2 * cls.D ** 2 / rp.n * power_norm(tails, ts / 2.0))
    rem = (4.0 * math.sqrt(rp.B * math.e) * cls.D * rp.F * rp.L
           * float(cls.M) ** (1.0 / ts) * ts / rp.n)
    return first + second + rem


def _h_search_ranges(spec: SpectrumSet, cls: MklClass, rp: RiskParams,
                     ts: float) -> list:
    """Per-coordinate candidate ranges for the integer truncation search."""
    ranges = []
    for s in spec:
        if isinstance(s, AlgebraicSpectrum):
            rate = RateSpec([s.d], [s.alpha])
            h_cont = float(optimal_truncation(
                rate, cls, rp, _conj_value(ts))[0])
            hi = int(math.ceil(3.0 * h_cont)) + 8
            if s.j_max is not None:
                hi = min(hi, s.j_max)
        else:
            hi = s.values.size
        ranges.append(np.arange(0, hi + 1))
    return ranges


def _conj_value(ts: float) -> float:
    return math.inf if ts == 1.0 else ts / (ts - 1.0)


def _minimize_h(cls: MklClass, spec: SpectrumSet, rp: RiskParams,
                ts: float) -> tuple:
    """Integer truncation levels minimizing the fixed-point objective at a
    fixed t*: coordinate descent with full per-coordinate scans, multi-start
    from the corners and the continuous candidate."""
    ranges = [r.astype(float) for r in _h_search_ranges(spec, cls, rp, ts)]
    M = spec.M
    starts = [np.zeros(M), np.array([r[-1] for r in ranges])]
    mid = np.array([min(round(r[-1] / 2.0), r[-1]) for r in ranges])
    starts.append(mid)
    best_h, best_val = None, math.inf
    for h0 in starts:
        h = h0.copy()
        val = _fixed_point_objective(cls, spec, rp, h, ts)
        for _ in range(24):
            improved = False
            for m in range(M):
                cand = np.tile(h, (ranges[m].size, 1))
                cand[:, m] = ranges[m]
                vals = np.array([
                    _fixed_point_objective(cls, spec, rp, c, ts) for c in cand])
                k = int(np.argmin(vals))
                if vals[k] < val - 1e-15 * max(1.0, abs(val)):
                    val, improved = float(vals[k]), True
                    h = cand[k]
            if not improved:
                break
        if val < best_val:
            best_val, best_h = val, h
    return best_val, tuple(int(x) for x in best_h)


def fixed_point_bound(cls: MklClass, spec: SpectrumSet, rp: RiskParams,
                      h: Optional[Sequence[int]] = None,
                      t=None) -> FixedPointResult:
    """Upper bound on the fixed point of the local complexity:

        r* <= 4 F^2 sum_m h_m / n
              + 8 F L sqrt(e t*^2 D^2 / n ||(tail_m(h_m))_m||_{t*/2})
              + 4 sqrt(B e) D F L M^(1/t*) t* / n,

    minimized over the integer truncation levels (and the t-grid) when they
    are not supplied.
    """
    if cls.p.p > 2.0:
        raise ValueError(f"fixed-point bound requires p in [1, 2], got {cls.p.p}")
    if spec.M != cls.M:
        raise ValueError("spectrum set and class disagree on M")

    if t is not None:
        tv = as_exponent(t).p
        if not (cls.p.p <= tv <= 2.0):
            raise ValueError(f"need t in [p, 2], got t={tv}")
        ts_list = [(tv, as_exponent(tv).p_star)]
    else:
        ts_list = [(float(tv), as_exponent(float(tv)).p_star)
                   for tv in t_candidates(cls.p.p, cls.M)]
        ts_list = [(tv, ts) for tv, ts in ts_list if math.isfinite(ts)]
        if not ts_list:
            raise ValueError("no finite-conjugate t available; p=1 needs M >= 2 "
                             "or an explicit t > 1")

    best = None
    for tv, ts in ts_list:
        if h is not None:
            hv = np.asarray(h, dtype=float)
            if hv.shape != (cls.M,) or np.any(hv < 0) or np.any(hv != np.floor(hv)):
                raise ValueError("h must be M nonnegative integers")
            val = _fixed_point_objective(cls, spec, rp, hv, ts)
            hh = tuple(int(x) for x in hv)
        else:
            val, hh = _minimize_h(cls, spec, rp, ts)
        if best is None or val < best[0]:
            best = (val, hh, tv)
    return FixedPointResult(r_star=best[0], h_used=best[1], t_used=best[2])


def rate_ratio_factor(alpha: float, variant: str = "auto") -> float:
    """The alpha-dependent ratio under the root of the excess-risk rate.

    As printed the ratio is (3 - alpha)/(1 - alpha), which is negative for
    alpha in (1, 3).  Variants:

    - "printed":  the literal ratio; raises when negative.
    - "abs":      |(3 - alpha)/(1 - alpha)|; zero exactly at alpha = 3.
    - "derived":  alpha/(alpha - 1), the positive tail-to-quadratic
                  bookkeeping ratio at the optimal truncation (equals "abs"
                  at alpha = 1.5).
    - "auto":     "abs" wherever that is positive, "derived" at the single
                  degenerate point alpha = 3 (keeps the leading term alive).
    """
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    printed = (3.0 - alpha) / (1.0 - alpha)
    if variant == "printed":
        if printed < 0.0:
            raise ValueError(
                f"(3-alpha)/(1-alpha) = {printed} is negative for alpha={alpha}")
        return printed
    if variant == "abs":
        return abs(printed)
    if variant == "derived":
        return alpha / (alpha - 1.0)
    if variant == "auto":
        v = abs(printed)
        return v if v > 0.0 else alpha / (alpha - 1.0)
    raise ValueError(f"unknown ratio variant {variant!r}")


@dataclass(frozen=True)
class ExcessRiskReport:
    value: float
    main_term: float
    global_term: float
    confidence_term: float
    t_used: float
    alpha_used: float
    ratio_factor: float
    sign_fix_applied: bool
    ratio_fallback: bool


def excess_risk_bound(cls: MklClass, rate: RateSpec, rp: RiskParams,
                      ratio_variant: str = "auto") -> ExcessRiskReport:
    """Excess-risk bound for p in [1, 2] with algebraically decaying spectra:

        min over t in [p, 2] of
        186 sqrt(ratio) (d_max D^2 F^-2 L^2 t*^2)^(1/(1+a)) M^(1+(2/(1+a))(1/t*-1))
            n^(-a/(1+a))
        + 47 sqrt(B) D L M^(1/t*) t* / n
        + (22 B D L M^(1/t*) + 27 F) x / n,          a = alpha_min.

    The printed alpha-ratio is negative under the root for alpha in (1, 3);
    the report flags whenever a sign fix (or the alpha=3 fallback) is used.
    """
    if cls.p.p > 2.0:
        raise ValueError(f"excess-risk bound requires p in [1, 2], got {cls.p.p}")
    a = rate.alpha_min
    ratio = rate_ratio_factor(a, variant=ratio_variant)
    printed = (3.0 - a) / (1.0 - a)
    sign_fix = printed < 0.0 and ratio_variant != "printed"
    fallback = printed == 0.0 and ratio > 0.0
    expo = 1.0 / (1.0 + a)

    best = None
    for tv in t_candidates(cls.p.p, cls.M):
        ts = as_exponent(float(tv)).p_star
        if math.isinf(ts):
            continue
        mpow = float(cls.M) ** (1.0 + 2.0 * expo * (1.0 / ts - 1.0))
        main = (186.0 * math.sqrt(ratio)
                * (rate.d_max * cls.D ** 2 * rp.F ** -2 * rp.L ** 2 * ts ** 2) ** expo
                * mpow * float(rp.n) ** (-a / (1.0 + a)))
        glob = 47.0 * math.sqrt(rp.B) * cls.D * rp.L \
            * float(cls.M) ** (1.0 / ts) * ts / rp.n
        conf = (22.0 * rp.B * cls.D * rp.L * float(cls.M) ** (1.0 / ts)
                + 27.0 * rp.F) * rp.x_conf / rp.n
        total = main + glob + conf
        if best is None or total < best[0]:
            best = (total, main, glob, conf, float(tv))
    total, main, glob, conf, tv = best
    return ExcessRiskReport(value=total, main_term=main, global_term=glob,
                            confidence_term=conf, t_used=tv, alpha_used=a,
                            ratio_factor=ratio, sign_fix_applied=sign_fix,
                            ratio_fallback=fallback)


def excess_from_fixed_point(r_star: float, rp: RiskParams) -> float:
    """Excess-risk bound assembled from a fixed point r* of the local
    complexity: 7 r*/F + (11 L (b - a) + 27 F) x / n."""
    if not r_star >= 0.0:
        raise ValueError(f"r_star must be nonnegative, got {r_star}")
    a, b = rp.loss_range
    return 7.0 * r_star / rp.F + (11.0 * rp.L * (b - a) + 27.0 * rp.F) \
        * rp.x_conf / rp.n


def nu_factor(p, alpha: float, M: int, D_p: float) -> float:
    """The p-dependent prefactor of the excess-risk rate,

        min over t in [p, 2] of (D_p t*)^(2/(1+alpha)) M^(1+(2/(1+alpha))(1/t*-1)),

    for p in [1, 2].  As alpha grows the factor tends to M for any D_p."""
    pe = as_exponent(p)
    if pe.p > 2.0:
        raise ValueError(f"the factor is defined for p in [1, 2], got {pe.p}")
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not D_p > 0.0:
        raise ValueError(f"D_p must be positive, got {D_p}")
    expo = 2.0 / (1.0 + alpha)
    best = math.inf
    for tv in t_candidates(pe.p, M):
        ts = as_exponent(float(tv)).p_star
        if math.isinf(ts):
            continue
        val = (D_p * ts) ** expo * float(M) ** (1.0 + expo * (1.0 / ts - 1.0))
        best = min(best, val)
    return best


def bayes_radius(bayes: SoftSparseBayes, p) -> float:
    """Smallest ball radius containing the soft-sparse reference hypothesis:
    the lp norm of its block-norm profile (sum_m m^(-beta p))^(1/p)."""
    return power_norm(bayes.block_profile(), as_exponent(p).p)


class NuCurve(NamedTuple):
    p_grid: np.ndarray
    nu: np.ndarray
    argmin_p: float
    argmin_nu: float


def nu_curve(bayes: SoftSparseBayes, alpha: float, p_grid) -> NuCurve:
    """nu_p over a sorted p-grid in [1, 2], with the argmin (ties toward
    smaller p)."""
    ps = np.asarray(p_grid, dtype=float)
    if ps.size == 0 or np.any(np.diff(ps) < 0):
        raise ValueError("p grid must be nonempty and sorted")
    nus = np.array([
        nu_factor(p, alpha, bayes.M, bayes_radius(bayes, p)) for p in ps])
    k = int(np.argmin(nus))
    return NuCurve(p_grid=ps, nu=nus, argmin_p=float(ps[k]),
                   argmin_nu=float(nus[k]))


@dataclass(frozen=True)
class RateComparison:
    local_rate: float
    global_rate: float
    minimum: float
    local_t: float
    global_t: float
    local_wins: bool


def _local_rate_shape(p: float, D: float, M: int, alpha: float,
                      n: float) -> tuple:
    expo = 2.0 / (1.0 + alpha)
    best, best_t = math.inf, p
    for tv in t_candidates(p, M):
        ts = as_exponent(float(tv)).p_star
        if math.isinf(ts):
            continue
        val = (ts * D) ** expo * float(M) ** (1.0 + expo * (1.0 / ts - 1.0)) \
            * n ** (-alpha / (1.0 + alpha))
        if val < best:
            best, best_t = val, float(tv)
    return best, best_t


def _global_rate_shape(p: float, D: float, M: int, n: float) -> tuple:
    best, best_t = math.inf, p
    for tv in t_candidates(p, M):
        ts = as_exponent(float(tv)).p_star
        if math.isinf(ts):
            continue
        val = ts * D * float(M) ** (1.0 / ts) / math.sqrt(n)
        if val < best:
            best, best_t = val, float(tv)
    return best, best_t


def rate_comparison(cls: MklClass, alpha: float, rp: RiskParams) -> RateComparison:
    """Shape-level (unit hidden constants) comparison of the two excess-risk
    rates: the spectral rate ~ n^(-alpha/(1+alpha)) against the global rate
    ~ n^(-1/2), each minimized over t."""
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    p = cls.p.p
    if p > 2.0:
        raise ValueError(f"comparison is defined for p in [1, 2], got {p}")
    loc, lt = _local_rate_shape(p, cls.D, cls.M, alpha, float(rp.n))
    glo, gt = _global_rate_shape(p, cls.D, cls.M, float(rp.n))
    return RateComparison(local_rate=loc, global_rate=glo,
                          minimum=min(loc, glo), local_t=lt, global_t=gt,
                          local_wins=loc <= glo)


@dataclass(frozen=True)
class PhaseTransition:
    M_values: np.ndarray
    crossover_n: np.ndarray
    gamma: float
    intercept: float


def _crossover_n(p: float, D: float, M: int, alpha: float,
                 n_lo: float, n_hi: float) -> float:
    def gap(n):
        return (_local_rate_shape(p, D, M, alpha, n)[0]
                - _global_rate_shape(p, D, M, n)[0])

    lo, hi = n_lo, n_hi
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo <= 0.0 or g_hi >= 0.0:
        raise ValueError(
            f"no local/global crossing in n range [{n_lo:g}, {n_hi:g}] "
            f"for M={M}, D={D}, p={p}")
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def phase_transition_locator(D: float, p, alpha: float, M_grid,
                             n_lo: float = 2.0,
                             n_hi: float = 1e16) -> PhaseTransition:
    """Locate, for each M, the sample size where the spectral rate starts to
    beat the global rate, and fit the exponent gamma relating the crossover:
    M^(1/p)/D proportional to n^gamma (gamma = 1/2 analytically)."""
    pe = as_exponent(p)
    if not D > 0.0:
        raise ValueError(f"D must be positive, got {D}")
    Ms = np.asarray(M_grid, dtype=int)
    if Ms.size < 2:
        raise ValueError("need at least two M values to fit the exponent")
    ns = np.array([
        _crossover_n(pe.p, D, int(M), alpha, n_lo, n_hi) for M in Ms])
    y = np.log(Ms.astype(float) ** pe.inv / D)
    x = np.log(ns)
    gamma, intercept = np.polyfit(x, y, 1)
    return PhaseTransition(M_values=Ms, crossover_n=ns,
                           gamma=float(gamma), intercept=float(intercept))


def fit_loglog_slope(ns, values) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size < 2 or ns.size != values.size:
        raise ValueError("need matching grids with at least two points")
    if values.min() <= 0.0:
        raise ValueError("log-log fit needs positive values")
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])
