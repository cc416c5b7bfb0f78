"""Exponent arithmetic, lp norms, block vectors, and the explicit constants
shared by every complexity bound in the package.

Everything here is a pure function of immutable inputs, so the module is
safe for unrestricted concurrent use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Exponent",
    "as_exponent",
    "conjugate",
    "lp_norm",
    "power_norm",
    "BlockVector",
    "block_norm",
    "MklClass",
    "khintchine_constant",
    "rosenthal_young_constant",
    "lq_to_lp_factor",
]


class Exponent:
    """A norm exponent p in [1, +inf], with +inf as a first-class value.

    The value is stored as the pair (1/p, 1/p*). ``conjugate`` swaps the
    pair instead of recomputing it, so double conjugation returns the
    original exponent bit for bit, including at the endpoints 1 and +inf.
    """

    __slots__ = ("inv", "inv_conj")

    def __init__(self, p):
        if isinstance(p, Exponent):
            inv, inv_conj = p.inv, p.inv_conj
        else:
            q = float(p)
            if math.isnan(q) or q < 1.0:
                raise ValueError(f"exponent must satisfy p >= 1, got {p!r}")
            if math.isinf(q):
                inv, inv_conj = 0.0, 1.0
            elif q == 1.0:
                inv, inv_conj = 1.0, 0.0
            else:
                inv = 1.0 / q
                inv_conj = (q - 1.0) / q
        self.inv = inv
        self.inv_conj = inv_conj

    @classmethod
    def _from_pair(cls, inv: float, inv_conj: float) -> "Exponent":
        obj = cls.__new__(cls)
        obj.inv = inv
        obj.inv_conj = inv_conj
        return obj

    @property
    def p(self) -> float:
        return math.inf if self.inv == 0.0 else 1.0 / self.inv

    @property
    def p_star(self) -> float:
        return math.inf if self.inv_conj == 0.0 else 1.0 / self.inv_conj

    @property
    def is_inf(self) -> bool:
        return self.inv == 0.0

    def conjugate(self) -> "Exponent":
        return Exponent._from_pair(self.inv_conj, self.inv)

    def __float__(self) -> float:
        return self.p

    def __eq__(self, other) -> bool:
        if isinstance(other, Exponent):
            return self.inv == other.inv and self.inv_conj == other.inv_conj
        try:
            return self.p == float(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash((self.inv, self.inv_conj))

    def __repr__(self) -> str:
        return f"Exponent({self.p!r})"


def as_exponent(p) -> Exponent:
    """Coerce a float, int, or Exponent to an Exponent (validating p >= 1)."""
    return p if isinstance(p, Exponent) else Exponent(p)


def conjugate(p) -> Exponent:
    """Conjugate exponent p*: 1/p + 1/p* = 1, with 1 <-> +inf and 2 -> 2."""
    return as_exponent(p).conjugate()


def power_norm(a, q: float) -> float:
    """(sum a_i^q)^(1/q) for nonnegative a and any q > 0; max for q = +inf.

    For q >= 1 this is the lp norm; for 0 < q < 1 it is the quasi-norm that
    appears whenever a bound is evaluated at t > 2 (so t*/2 < 1).  Computed
    with max-rescaling so long algebraically-decaying inputs do not overflow
    at large q.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if a.size and a.min() < 0.0:
        raise ValueError("negative entry in nonnegative-vector norm")
    if a.size == 0:
        return 0.0
    if math.isinf(q):
        return float(a.max())
    if q <= 0.0 or math.isnan(q):
        raise ValueError(f"norm order must be positive, got {q}")
    m = float(a.max())
    if m == 0.0 or math.isinf(m):
        return m
    return m * float(np.sum((a / m) ** q)) ** (1.0 / q)


def lp_norm(a, q) -> float:
    """lp norm of a nonnegative vector, q in [1, +inf].

    Negative entries are rejected rather than absolute-valued: every use in
    this package is on intrinsically nonnegative data (block norms, traces,
    tail sums), so a negative entry means a bug upstream.
    """
    qv = as_exponent(q).p
    return power_norm(a, qv)


class BlockVector:
    """An element of a product Hilbert space H_1 x ... x H_M in coordinates.

    Holds M nonempty 1-d coordinate blocks (block m has length rank_m).
    Instances are immutable; the underlying arrays are marked read-only.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        blocks = tuple(np.array(b, dtype=float, copy=True) for b in blocks)
        if len(blocks) < 1:
            raise ValueError("need at least one block")
        for b in blocks:
            if b.ndim != 1 or b.size == 0:
                raise ValueError("every block must be a nonempty 1-d vector")
            b.setflags(write=False)
        self.blocks = blocks

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple:
        return tuple(b.size for b in self.blocks)

    def block_norms(self) -> np.ndarray:
        """Per-block Euclidean norms, a nonnegative vector of length M."""
        return np.array([math.sqrt(float(b @ b)) for b in self.blocks])

    def norm(self, p) -> float:
        return block_norm(self, p)

    def inner(self, other: "BlockVector") -> float:
        if self.sizes != other.sizes:
            raise ValueError("block shapes do not match")
        return float(sum(a @ b for a, b in zip(self.blocks, other.blocks)))

    def to_flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    @classmethod
    def from_flat(cls, flat, sizes) -> "BlockVector":
        flat = np.asarray(flat, dtype=float)
        if flat.size != sum(sizes):
            raise ValueError("flat length does not match block sizes")
        out, i = [], 0
        for s in sizes:
            out.append(flat[i:i + s])
            i += s
        return cls(out)

    def __repr__(self) -> str:
        return f"BlockVector(M={self.num_blocks}, sizes={self.sizes})"


def block_norm(v: BlockVector, p) -> float:
    """The (2,p) block norm: lp norm of the vector of per-block 2-norms."""
    return lp_norm(v.block_norms(), p)


@dataclass(frozen=True)
class MklClass:
    """Hypothesis-class parameters: ball radius D in the (2,p) norm, M blocks."""

    p: Exponent
    D: float
    M: int

    def __post_init__(self):
        object.__setattr__(self, "p", as_exponent(self.p))
        if not self.D > 0.0:
            raise ValueError(f"D must be positive, got {self.D}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def p_star(self) -> float:
        return self.p.p_star


def khintchine_constant(p, tight: bool = False) -> float:
    """Constant c in the sign-sum moment inequality E||sum s_i v_i||^q <= (c
    sum ||v_i||^2)^(q/2) at moment order q = p*.

    The operative constant (default) is c = p*, which is the one the bound
    formulas use; ``tight=True`` returns the sharper max(1, p* - 1).  For
    p = 1 the conjugate is infinite, so callers must work at finite t >= p.
    """
    ps = as_exponent(p).p_star
    if tight:
        return max(1.0, ps - 1.0)
    return ps


def rosenthal_young_constant(q: float) -> float:
    """C_q = (2 q e)^q, the constant in the bounded-sum moment inequality."""
    q = float(q)
    if not q >= 0.5:
        raise ValueError(f"moment order must be >= 1/2, got {q}")
    return (2.0 * q * math.e) ** q


def lq_to_lp_factor(M: int, q, p) -> float:
    """M^(1/q - 1/p), the factor with ||a||_q <= factor * ||a||_p for all
    nonnegative a of length M and 1 <= q <= p <= +inf."""
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    qe, pe = as_exponent(q), as_exponent(p)
    if qe.inv < pe.inv:  # 1/q < 1/p means q > p
        raise ValueError(f"need q <= p, got q={qe.p}, p={pe.p}")
    return float(M) ** (qe.inv - pe.inv)
