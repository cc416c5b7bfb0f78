"""Analytic global and local Rademacher complexity bounds for block-norm
multiple kernel learning classes, each evaluatable at a fixed interpolation
exponent t or minimized over a grid in [p, 2].

Every operation returns a BoundReport carrying the value, its main/remainder
split, the t actually used, and any truncation levels, so downstream code
(sandwich comparisons, the CLI, fixed-point machinery) can audit each term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Exponent, MklClass, as_exponent, power_norm
from .spectra import ExplicitSpectrum, KernelSpectrum, SpectrumSet

__all__ = [
    "BoundReport",
    "LocalQuery",
    "LowerBoundPreconditionError",
    "FORMULA_IDS",
    "t_candidates",
    "grc_empirical",
    "grc_population",
    "lrc_upper_p12",
    "lrc_upper_pge2",
    "lrc_upper_p1",
    "lrc_hparam",
    "lrc_lower",
]

FORMULA_IDS = frozenset(
    {"GRC_EMP", "GRC_POP", "LRC_P12", "LRC_PGE2", "LRC_P1", "LRC_HPARAM", "LOWER"}
)

T_GRID_SIZE = 64


class LowerBoundPreconditionError(ValueError):
    """The lower bound's eigenvalue/radius preconditions are violated."""


@dataclass(frozen=True)
class BoundReport:
    """A bound value with its per-term breakdown.

    value == main_term + remainder_term (exactly, by construction).
    """

    value: float
    main_term: float
    remainder_term: float
    t_used: float
    formula_id: str
    h_used: Optional[tuple] = None

    def __post_init__(self):
        if self.formula_id not in FORMULA_IDS:
            raise ValueError(f"unknown formula id {self.formula_id!r}")

    @staticmethod
    def of(main: float, remainder: float, t: float, formula: str,
           h=None) -> "BoundReport":
        h = None if h is None else tuple(int(x) for x in h)
        return BoundReport(value=main + remainder, main_term=main,
                           remainder_term=remainder, t_used=float(t),
                           formula_id=formula, h_used=h)


@dataclass(frozen=True)
class LocalQuery:
    """Inputs of a local complexity bound: class, radius r of the variance
    ball (P f^2 <= r), sample size n, and the kernel sup bound B."""

    cls: MklClass
    r: float
    n: int
    B: float

    def __post_init__(self):
        if not self.r >= 0.0:
            raise ValueError(f"r must be nonnegative, got {self.r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not self.B > 0.0:
            raise ValueError(f"B must be positive, got {self.B}")


def t_candidates(p: float, M: int, hi: float = 2.0,
                 size: int = T_GRID_SIZE) -> np.ndarray:
    """Geometric grid of interpolation exponents in [p, hi], plus the
    analytic candidates (2 log M)* and (log M)* clamped into the range."""
    p = float(p)
    if p >= hi:
        return np.array([p])
    pts = list(np.geomspace(p, hi, size))
    for x in (2.0 * math.log(M), math.log(M)) if M >= 2 else ():
        if x > 1.0:
            t = x / (x - 1.0)  # conjugate of x
            pts.append(min(max(t, p), hi))
    pts.extend([p, hi])
    return np.unique(np.array(pts))


def _minimize_over_t(eval_at, p: float, M: int, hi: float = 2.0):
    """Min of eval_at(t) over the t-grid; ties break toward smaller t."""
    best_t, best = None, math.inf
    for t in t_candidates(p, M, hi=hi):
        rep = eval_at(float(t))
        if rep.value < best:
            best, best_t = rep.value, rep
    if best_t is None or not math.isfinite(best):
        # every grid point degenerate: report the hi endpoint honestly
        return eval_at(hi if hi > p else p)
    return best_t


def _remainder_term(D: float, M: int, B: float, t_star: float, n: int) -> float:
    """sqrt(B e) * D * M^(1/t*) * t* / n, the fast 1/n correction term."""
    if math.isinf(t_star):
        return math.inf
    return math.sqrt(B * math.e) * D * float(M) ** (1.0 / t_star) * t_star / n


def grc_empirical(cls: MklClass, traces, n: int,
                  t=None) -> BoundReport:
    """Empirical global complexity bound D sqrt(t*/n ||(tr K_m)_m||_{t*/2}),
    valid for every t >= p; minimized over the grid when t is omitted."""
    traces = np.asarray(traces, dtype=float)
    if traces.shape != (cls.M,):
        raise ValueError(f"expected {cls.M} Gram traces, got shape {traces.shape}")
    if traces.size and traces.min() < 0.0:
        raise ValueError("Gram traces must be nonnegative")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")

    def eval_at(tv: float) -> BoundReport:
        ts = as_exponent(tv).p_star
        if math.isinf(ts):
            main = 0.0 if float(traces.max(initial=0.0)) == 0.0 else math.inf
        else:
            main = cls.D * math.sqrt(ts / n * power_norm(traces, ts / 2.0))
        return BoundReport.of(main, 0.0, tv, "GRC_EMP")

    if t is not None:
        tv = as_exponent(t).p
        if tv < cls.p.p:
            raise ValueError(f"need t >= p, got t={tv} < p={cls.p.p}")
        return eval_at(tv)
    return _minimize_over_t(eval_at, cls.p.p, cls.M)


def grc_population(cls: MklClass, spec: SpectrumSet, n: int, B: float,
                   t=None) -> BoundReport:
    """Population global complexity bound
    D t* sqrt(e/n ||(tr J_m)_m||_{t*/2}) + sqrt(B e) D M^(1/t*) t* / n.

    The remainder term is dropped for t >= 2 (where it is not needed and the
    main term alone covers unbounded kernels as well).
    """
    if spec.M != cls.M:
        raise ValueError("spectrum set and class disagree on M")
    if not B > 0.0:
        raise ValueError(f"B must be positive, got {B}")
    traces = spec.traces()

    def eval_at(tv: float) -> BoundReport:
        ts = as_exponent(tv).p_star
        if math.isinf(ts):
            return BoundReport.of(math.inf, 0.0, tv, "GRC_POP")
        main = cls.D * ts * math.sqrt(math.e / n * power_norm(traces, ts / 2.0))
        rem = 0.0 if tv >= 2.0 else _remainder_term(cls.D, cls.M, B, ts, n)
        return BoundReport.of(main, rem, tv, "GRC_POP")

    if t is not None:
        tv = as_exponent(t).p
        if tv < cls.p.p:
            raise ValueError(f"need t >= p, got t={tv} < p={cls.p.p}")
        if tv == 1.0:
            raise ValueError("population bound needs a finite conjugate; t=1 "
                             "gives t* = inf (use some t > 1)")
        return eval_at(tv)
    return _minimize_over_t(eval_at, cls.p.p, cls.M)


def lrc_upper_p12(q: LocalQuery, spec: SpectrumSet, t=None,
                  const_mult: float = 1.0) -> BoundReport:
    """Local complexity bound for 1 <= p <= 2 under block uncorrelatedness:

        sqrt(16/n ||(sum_j min(r M^(1-2/t*), c e D^2 t*^2 lam_j^(m)))_m||_{t*/2})
        + sqrt(B e) D M^(1/t*) t* / n,   t in [p, 2].

    Block uncorrelatedness of the feature blocks is the caller's
    responsibility; it is not checkable from the spectra alone.
    ``const_mult`` is the optional absolute constant c (default 1) in front
    of e D^2 t*^2, exposed for sensitivity checks.
    """
    cls = q.cls
    if cls.p.p > 2.0:
        raise ValueError(f"this bound requires p <= 2, got p={cls.p.p}")
    if spec.M != cls.M:
        raise ValueError("spectrum set and class disagree on M")

    def eval_at(tv: float) -> BoundReport:
        ts = as_exponent(tv).p_star
        rem = _remainder_term(cls.D, cls.M, q.B, ts, q.n)
        if math.isinf(ts):
            return BoundReport.of(math.inf, rem if math.isfinite(rem) else 0.0,
                                  tv, "LRC_P12")
        r_eff = q.r * float(cls.M) ** (1.0 - 2.0 / ts)
        c_eff = const_mult * math.e * cls.D ** 2 * ts ** 2
        sums = spec.truncated_min_sums(r_eff, c_eff)
        main = math.sqrt(16.0 / q.n * power_norm(sums, ts / 2.0))
        return BoundReport.of(main, rem, tv, "LRC_P12")

    if t is not None:
        tv = as_exponent(t).p
        if not (cls.p.p <= tv <= 2.0):
            raise ValueError(f"need t in [p, 2], got t={tv}")
        return eval_at(tv)
    return _minimize_over_t(eval_at, cls.p.p, cls.M)


def _coerce_spectrum(s) -> KernelSpectrum:
    if isinstance(s, KernelSpectrum):
        return s
    vals = np.sort(np.asarray(s, dtype=float))[::-1]
    return ExplicitSpectrum(vals)


def lrc_upper_pge2(q: LocalQuery, joint_spec) -> BoundReport:
    """Local complexity bound for p >= 2 via the joint covariance spectrum:

        sqrt(2/n sum_j min(r, D^2 M^(2/p* - 1) lam_j)).

    No boundedness or uncorrelatedness assumption is needed here.
    """
    cls = q.cls
    if cls.p.p < 2.0:
        raise ValueError(f"this bound requires p >= 2, got p={cls.p.p}")
    joint = _coerce_spectrum(joint_spec)
    c_eff = cls.D ** 2 * float(cls.M) ** (2.0 * cls.p.inv_conj - 1.0)
    main = math.sqrt(2.0 / q.n * joint.truncated_min_sum(q.r, c_eff))
    return BoundReport.of(main, 0.0, cls.p.p, "LRC_PGE2")


def lrc_upper_p1(q: LocalQuery, spec: SpectrumSet) -> BoundReport:
    """The p = 1 specialization (t = (log M)*), needing M >= 2:

        sqrt(16/n max_m sum_j min(r M, e^3 D^2 (log M)^2 lam_j^(m)))
        + sqrt(B) e^(3/2) D log(M) / n.
    """
    cls = q.cls
    if cls.M < 2:
        raise ValueError("the p=1 specialization needs M >= 2")
    logM = math.log(cls.M)
    c_eff = math.e ** 3 * cls.D ** 2 * logM ** 2
    sums = spec.truncated_min_sums(q.r * cls.M, c_eff)
    main = math.sqrt(16.0 / q.n * float(sums.max()))
    rem = math.sqrt(q.B) * math.e ** 1.5 * cls.D * logM / q.n
    return BoundReport.of(main, rem, 1.0, "LRC_P1")


def lrc_hparam(q: LocalQuery, spec: SpectrumSet, h: Sequence[int],
               t) -> BoundReport:
    """The truncation-level form consumed by the fixed-point machinery:

        sqrt(4 r sum_m h_m / n)
        + sqrt(4 e t*^2 D^2 / n ||(tail_m(h_m))_m||_{t*/2})
        + sqrt(B e) D M^(1/t*) t* / n,

    valid for every choice of nonnegative integers h_m and t in [p, 2].
    """
    cls = q.cls
    tv = as_exponent(t).p
    if not (cls.p.p <= tv <= 2.0):
        raise ValueError(f"need t in [p, 2], got t={tv}")
    h = np.asarray(h)
    if h.shape != (cls.M,):
        raise ValueError(f"expected {cls.M} truncation levels")
    if np.any(h < 0) or np.any(h != np.floor(h)):
        raise ValueError("truncation levels must be nonnegative integers")
    if spec.M != cls.M:
        raise ValueError("spectrum set and class disagree on M")
    ts = as_exponent(tv).p_star
    tails = spec.tail_sums(h)
    first = math.sqrt(4.0 * q.r * float(np.sum(h)) / q.n)
    if math.isinf(ts):
        second = 0.0 if float(tails.max(initial=0.0)) == 0.0 else math.inf
        rem = math.inf
    else:
        second = math.sqrt(4.0 * math.e * ts ** 2 * cls.D ** 2 / q.n
                           * power_norm(tails, ts / 2.0))
        rem = _remainder_term(cls.D, cls.M, q.B, ts, q.n)
    return BoundReport.of(first + second, rem, tv, "LRC_HPARAM", h=h)


def lrc_lower(q: LocalQuery, base_spectrum, c_abs: float = 1.0) -> BoundReport:
    """Lower bound for identically distributed i.i.d. centered blocks:

        sqrt(c_abs / n * sum_j min(r M, D^2 M^(2/p*) lam_j^(1))),

    requiring lam_1 >= 1/(n D^2) and r >= 1/n.  The absolute constant is an
    explicit input (default 1); sandwich comparisons treat it as a shape
    parameter.
    """
    cls = q.cls
    base = _coerce_spectrum(base_spectrum)
    if not c_abs > 0.0:
        raise ValueError(f"c_abs must be positive, got {c_abs}")
    lam1 = base.top()
    if lam1 < 1.0 / (q.n * cls.D ** 2):
        raise LowerBoundPreconditionError(
            f"top eigenvalue {lam1} below 1/(n D^2) = {1.0 / (q.n * cls.D ** 2)}")
    if q.r < 1.0 / q.n:
        raise LowerBoundPreconditionError(
            f"radius r={q.r} below 1/n = {1.0 / q.n}")
    c_eff = cls.D ** 2 * float(cls.M) ** (2.0 * cls.p.inv_conj)
    main = math.sqrt(c_abs / q.n * base.truncated_min_sum(q.r * cls.M, c_eff))
    return BoundReport.of(main, 0.0, cls.p.p, "LOWER")
