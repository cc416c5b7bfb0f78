"""Eigenvalue-sequence models for kernel covariance operators.

Three spectrum kinds are supported: explicit finite lists, finite-rank
lists, and algebraic decay lam_j = d * j^(-alpha) with alpha > 1 (optionally
hard-truncated at j_max).  Tail sums of algebraic spectra are computed
through the Hurwitz zeta function, which is exact to machine precision, so
downstream comparisons against the closed-form integral bound are
meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .core import BlockVector

__all__ = [
    "KernelSpectrum",
    "ExplicitSpectrum",
    "FiniteRankSpectrum",
    "AlgebraicSpectrum",
    "SpectrumSet",
    "GramSpectrum",
    "EigensolverError",
    "tail_sum",
    "algebraic_tail_bound",
    "truncated_min_sum",
    "gram_spectrum",
    "spectrum_from_config",
    "spectrum_to_config",
]

_TIE_TOL = 1e-12


class EigensolverError(RuntimeError):
    """The symmetric eigensolver failed to converge."""


def _validate_nonincreasing(values: np.ndarray) -> None:
    if values.size and values.min() < 0.0:
        raise ValueError("eigenvalues must be nonnegative")
    if values.size >= 2:
        scale = max(1.0, float(values[0]))
        if np.any(np.diff(values) > _TIE_TOL * scale):
            raise ValueError("eigenvalues must be nonincreasing")


class KernelSpectrum:
    """Interface shared by the three spectrum kinds."""

    kind: str = ""

    def trace(self) -> float:
        raise NotImplementedError

    def tail_sum(self, h: int) -> float:
        """Sum of eigenvalues with index j > h (exact)."""
        raise NotImplementedError

    def truncated_min_sum(self, r_eff: float, c_eff: float) -> float:
        """sum_j min(r_eff, c_eff * lam_j)."""
        raise NotImplementedError

    def leading(self, count: int) -> np.ndarray:
        """First ``count`` eigenvalues as a dense array (zero-padded)."""
        raise NotImplementedError

    def top(self) -> float:
        return float(self.leading(1)[0])


def _check_min_sum_args(r_eff: float, c_eff: float) -> None:
    if r_eff < 0.0 or c_eff < 0.0:
        raise ValueError("r_eff and c_eff must be nonnegative")


class ExplicitSpectrum(KernelSpectrum):
    """A finite, explicitly listed eigenvalue sequence (zero beyond the list)."""

    kind = "explicit"

    def __init__(self, values):
        values = np.array(values, dtype=float, copy=True)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("expected a nonempty 1-d eigenvalue list")
        _validate_nonincreasing(values)
        values.setflags(write=False)
        self.values = values

    def trace(self) -> float:
        return float(self.values.sum())

    def tail_sum(self, h: int) -> float:
        h = _as_index(h)
        return float(self.values[h:].sum())

    def truncated_min_sum(self, r_eff: float, c_eff: float) -> float:
        _check_min_sum_args(r_eff, c_eff)
        if c_eff == 0.0 or r_eff == 0.0:
            return 0.0
        if math.isinf(r_eff):
            return c_eff * self.trace()
        return float(np.minimum(r_eff, c_eff * self.values).sum())

    def leading(self, count: int) -> np.ndarray:
        out = np.zeros(count)
        k = min(count, self.values.size)
        out[:k] = self.values[:k]
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(len={self.values.size})"


class FiniteRankSpectrum(ExplicitSpectrum):
    """Explicit spectrum with declared finite rank (trailing zeros allowed)."""

    kind = "finite_rank"

    def __init__(self, values, rank: int | None = None):
        super().__init__(values)
        if rank is None:
            rank = int(np.count_nonzero(self.values))
        if rank < 0 or rank > self.values.size:
            raise ValueError(f"rank {rank} outside [0, {self.values.size}]")
        self.rank = int(rank)


class AlgebraicSpectrum(KernelSpectrum):
    """lam_j = d * j^(-alpha) with d > 0, alpha > 1; optional cutoff j_max."""

    kind = "algebraic"

    def __init__(self, d: float, alpha: float, j_max: int | None = None):
        if not d > 0.0:
            raise ValueError(f"d must be positive, got {d}")
        if not alpha > 1.0:
            raise ValueError(f"alpha must exceed 1 for a finite trace, got {alpha}")
        if j_max is not None and (int(j_max) != j_max or j_max < 1):
            raise ValueError(f"j_max must be a positive integer, got {j_max}")
        self.d = float(d)
        self.alpha = float(alpha)
        self.j_max = None if j_max is None else int(j_max)

    def _zeta_tail(self, start: float) -> float:
        # sum_{j >= start} j^(-alpha), start >= 1
        return float(hurwitz_zeta(self.alpha, start))

    def trace(self) -> float:
        return self.tail_sum(0)

    def tail_sum(self, h) -> float:
        h = _as_index(h, allow_float=True)
        if self.j_max is not None and h >= self.j_max:
            return 0.0
        out = self._zeta_tail(h + 1.0)
        if self.j_max is not None:
            out -= self._zeta_tail(self.j_max + 1.0)
        return self.d * out

    def tail_bound(self, h) -> float:
        """Closed-form integral bound d * h^(1-alpha) / (alpha-1), h >= 1."""
        if h < 1:
            return math.inf
        return self.d * float(h) ** (1.0 - self.alpha) / (self.alpha - 1.0)

    def truncated_min_sum(self, r_eff: float, c_eff: float) -> float:
        _check_min_sum_args(r_eff, c_eff)
        if c_eff == 0.0 or r_eff == 0.0:
            return 0.0
        if math.isinf(r_eff):
            return c_eff * self.trace()
        # crossover: c*lam_j >= r  iff  j <= (c*d/r)^(1/alpha)
        j0 = math.floor((c_eff * self.d / r_eff) ** (1.0 / self.alpha))
        if self.j_max is not None:
            j0 = min(j0, self.j_max)
        best = math.inf
        for h in (j0 - 1, j0, j0 + 1):
            if h < 0:
                continue
            if self.j_max is not None and h > self.j_max:
                continue
            best = min(best, h * r_eff + c_eff * self.tail_sum(h))
        return best

    def leading(self, count: int) -> np.ndarray:
        j = np.arange(1, count + 1, dtype=float)
        vals = self.d * j ** (-self.alpha)
        if self.j_max is not None:
            vals[int(self.j_max):] = 0.0
        return vals

    def __repr__(self) -> str:
        return (f"AlgebraicSpectrum(d={self.d}, alpha={self.alpha}, "
                f"j_max={self.j_max})")


def _as_index(h, allow_float: bool = False):
    if isinstance(h, (bool, np.bool_)):
        raise ValueError("truncation level must be a nonnegative integer")
    hf = float(h)
    if hf < 0 or math.isnan(hf):
        raise ValueError(f"truncation level must be nonnegative, got {h}")
    if not allow_float and int(hf) != hf:
        raise ValueError(f"truncation level must be an integer, got {h}")
    return int(hf) if not allow_float else hf


class SpectrumSet:
    """Per-kernel eigenvalue models for M kernels."""

    def __init__(self, spectra):
        spectra = tuple(spectra)
        if not spectra:
            raise ValueError("need at least one kernel spectrum")
        for s in spectra:
            if not isinstance(s, KernelSpectrum):
                raise TypeError(f"not a KernelSpectrum: {s!r}")
        self.spectra = spectra

    @property
    def M(self) -> int:
        return len(self.spectra)

    def __getitem__(self, m: int) -> KernelSpectrum:
        return self.spectra[m]

    def __iter__(self):
        return iter(self.spectra)

    def traces(self) -> np.ndarray:
        return np.array([s.trace() for s in self.spectra])

    def tail_sums(self, h) -> np.ndarray:
        h = np.broadcast_to(np.asarray(h), (self.M,))
        return np.array([s.tail_sum(hm) for s, hm in zip(self.spectra, h)])

    def truncated_min_sums(self, r_eff: float, c_eff: float) -> np.ndarray:
        return np.array([s.truncated_min_sum(r_eff, c_eff) for s in self.spectra])

    def joint_spectrum(self) -> ExplicitSpectrum:
        """Spectrum of the joint covariance operator for centered,
        pairwise-uncorrelated blocks: the union with multiplicity of the
        per-block spectra, sorted nonincreasing.

        Requires finitely representable spectra (algebraic ones need j_max).
        """
        parts = []
        for s in self.spectra:
            if isinstance(s, ExplicitSpectrum):
                parts.append(s.values)
            elif isinstance(s, AlgebraicSpectrum):
                if s.j_max is None:
                    raise ValueError(
                        "joint spectrum of an uncut algebraic spectrum is not "
                        "finitely representable; set j_max")
                parts.append(s.leading(s.j_max))
            else:  # pragma: no cover - no other kinds exist
                raise TypeError(f"unsupported spectrum kind {s.kind}")
        merged = np.sort(np.concatenate(parts))[::-1]
        return ExplicitSpectrum(merged)

    def __repr__(self) -> str:
        return f"SpectrumSet(M={self.M})"


def tail_sum(spec: SpectrumSet, m: int, h) -> float:
    """sum_{j>h} lam_j^(m), exact for every spectrum kind."""
    return spec[m].tail_sum(h)


def algebraic_tail_bound(spec: SpectrumSet, m: int, h) -> float:
    """The closed-form tail bound d * h^(1-alpha)/(alpha-1); algebraic only."""
    s = spec[m]
    if not isinstance(s, AlgebraicSpectrum):
        raise TypeError("closed-form tail bound applies to algebraic spectra only")
    return s.tail_bound(h)


def truncated_min_sum(spec: SpectrumSet, m: int, r_eff: float, c_eff: float) -> float:
    """sum_j min(r_eff, c_eff * lam_j^(m))."""
    return spec[m].truncated_min_sum(r_eff, c_eff)


@dataclass(frozen=True)
class GramSpectrum:
    """Eigenvalues (nonincreasing) and trace of a normalized kernel Gram matrix."""

    eigenvalues: np.ndarray
    trace: float

    @property
    def n(self) -> int:
        return self.eigenvalues.size


def gram_spectrum(points, m: int) -> GramSpectrum:
    """Spectrum of the n x n matrix with entries <x_i^(m), x_j^(m)> / n.

    ``points`` is a sequence of BlockVector samples.  Eigensolver failures
    surface as EigensolverError rather than a bare linear-algebra error.
    """
    if len(points) < 1:
        raise ValueError("need at least one sample")
    X = np.stack([np.asarray(pt.blocks[m], dtype=float) for pt in points])
    n = X.shape[0]
    G = (X @ X.T) / n
    try:
        evals = np.linalg.eigvalsh(G)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"Gram eigensolve failed: {exc}") from exc
    evals = evals[::-1].copy()
    # PSD up to roundoff; clip the roundoff, reject anything structural
    tol = 1e-10 * max(1.0, float(np.abs(evals).max()))
    if evals.size and evals.min() < -tol:
        raise EigensolverError("Gram matrix has a significantly negative eigenvalue")
    np.clip(evals, 0.0, None, out=evals)
    evals.setflags(write=False)
    trace = float(np.einsum("ij,ij->", X, X)) / n
    return GramSpectrum(eigenvalues=evals, trace=trace)


def spectrum_from_config(cfg: dict) -> KernelSpectrum:
    """Build a spectrum from a config mapping {"kind": ..., ...}."""
    kind = cfg.get("kind")
    if kind == "explicit":
        return ExplicitSpectrum(cfg["values"])
    if kind == "finite_rank":
        return FiniteRankSpectrum(cfg["values"], rank=cfg.get("rank"))
    if kind == "algebraic":
        return AlgebraicSpectrum(cfg["d"], cfg["alpha"], j_max=cfg.get("j_max"))
    raise ValueError(f"unknown spectrum kind {kind!r}")


def spectrum_to_config(s: KernelSpectrum) -> dict:
    if isinstance(s, FiniteRankSpectrum):
        return {"kind": "finite_rank", "values": s.values.tolist(), "rank": s.rank}
    if isinstance(s, ExplicitSpectrum):
        return {"kind": "explicit", "values": s.values.tolist()}
    if isinstance(s, AlgebraicSpectrum):
        out = {"kind": "algebraic", "d": s.d, "alpha": s.alpha}
        if s.j_max is not None:
            out["j_max"] = s.j_max
        return out
    raise TypeError(f"unsupported spectrum {s!r}")
