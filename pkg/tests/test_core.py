import math

import numpy as np
import pytest

from mklrad.core import (
    BlockVector,
    Exponent,
    MklClass,
    block_norm,
    conjugate,
    khintchine_constant,
    lp_norm,
    lq_to_lp_factor,
    power_norm,
    rosenthal_young_constant,
)
from mklrad.empirical import holder_witness


class TestConjugate:
    def test_self_conjugate(self):
        assert conjugate(2).p == 2.0

    def test_limiting_cases(self):
        assert conjugate(1).p == math.inf
        assert conjugate(math.inf).p == 1.0

    def test_four_thirds(self):
        # 3/4 + 1/p* = 1  =>  p* = 4
        assert conjugate(4.0 / 3.0).p == pytest.approx(4.0, rel=1e-14)

    def test_double_conjugation_is_exact(self):
        rng = np.random.default_rng(0)
        for p in [1.0, 1.5, 2.0, 3.0, 4.0, 4.0 / 3.0, math.inf,
                  *rng.uniform(1.0, 50.0, size=200)]:
            e = Exponent(p)
            assert e.conjugate().conjugate() == e

    def test_rejects_below_one(self):
        with pytest.raises(ValueError):
            conjugate(0.5)
        with pytest.raises(ValueError):
            Exponent(0.999)


class TestLpNorm:
    def test_pythagorean(self):
        assert lp_norm([3.0, 4.0], 2) == pytest.approx(5.0, rel=1e-15)

    def test_sum(self):
        assert lp_norm([3.0, 4.0], 1) == pytest.approx(7.0, rel=1e-15)

    def test_max(self):
        assert lp_norm([3.0, 4.0], math.inf) == 4.0

    def test_zero_vector(self):
        assert lp_norm([0.0, 0.0, 0.0], 3.0) == 0.0

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            lp_norm([1.0, -0.1], 2)

    def test_rejects_q_below_one(self):
        with pytest.raises(ValueError):
            lp_norm([1.0, 2.0], 0.5)

    def test_no_overflow_on_long_tails(self):
        # algebraic tail with a large exponent: naive powers would overflow
        a = np.arange(1, 20000, dtype=float) ** -2.0 * 1e120
        v = lp_norm(a, 40.0)
        assert math.isfinite(v)
        assert v == pytest.approx(1e120 * lp_norm(a / 1e120, 40.0), rel=1e-12)

    def test_power_norm_subunit_order(self):
        # t > 2 gives t*/2 < 1; the quasi-norm dominates the l1 norm
        a = np.array([0.5, 1.3, 0.2])
        assert power_norm(a, 0.75) >= a.sum()


class TestBlockNorm:
    def test_reduces_to_lp(self):
        v = BlockVector([[3.0], [4.0]])
        assert block_norm(v, 2) == pytest.approx(5.0, rel=1e-15)

    def test_unit_blocks(self):
        v = BlockVector([[1.0, 0.0], [0.0, 1.0]])
        assert block_norm(v, 1) == pytest.approx(2.0, rel=1e-15)

    def test_hand_value(self):
        # ||b1|| = sqrt(5), ||b2|| = 3: (5^(3/2) + 27)^(1/3) = 3.36729...
        v = BlockVector([[1.0, 2.0], [2.0, 2.0, 1.0]])
        expect = (5.0 ** 1.5 + 27.0) ** (1.0 / 3.0)
        assert block_norm(v, 3) == pytest.approx(expect, rel=1e-14)
        assert expect == pytest.approx(3.367285, abs=5e-6)

    def test_monotone_nonincreasing_in_p(self):
        rng = np.random.default_rng(1)
        v = BlockVector([rng.standard_normal(3) for _ in range(5)])
        grid = [1.0, 1.2, 1.5, 2.0, 3.0, 6.0, math.inf]
        vals = [block_norm(v, p) for p in grid]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_immutability(self):
        v = BlockVector([[1.0, 2.0]])
        with pytest.raises(ValueError):
            v.blocks[0][0] = 9.0

    def test_validation(self):
        with pytest.raises(ValueError):
            BlockVector([])
        with pytest.raises(ValueError):
            BlockVector([[]])


class TestConstants:
    def test_khintchine_p2(self):
        assert khintchine_constant(2) == 2.0
        assert khintchine_constant(2, tight=True) == 1.0

    def test_khintchine_p1_infinite(self):
        assert khintchine_constant(1) == math.inf

    def test_khintchine_four_thirds(self):
        assert khintchine_constant(4.0 / 3.0) == pytest.approx(4.0, rel=1e-14)
        assert khintchine_constant(4.0 / 3.0, tight=True) == pytest.approx(
            3.0, rel=1e-14)

    def test_rosenthal_young(self):
        assert rosenthal_young_constant(1.0) == pytest.approx(
            2.0 * math.e, rel=1e-15)
        assert rosenthal_young_constant(0.5) == pytest.approx(
            math.sqrt(math.e), rel=1e-15)
        assert rosenthal_young_constant(2.0) == pytest.approx(
            (4.0 * math.e) ** 2, rel=1e-15)
        with pytest.raises(ValueError):
            rosenthal_young_constant(0.4)

    def test_lq_lp_factor(self):
        assert lq_to_lp_factor(4, 1, 2) == pytest.approx(2.0, rel=1e-15)
        assert lq_to_lp_factor(17, 1.37, 1.37) == 1.0
        assert lq_to_lp_factor(1000, 2, math.inf) == pytest.approx(
            math.sqrt(1000.0), rel=1e-14)
        with pytest.raises(ValueError):
            lq_to_lp_factor(4, 2, 1)


class TestMklClass:
    def test_validation(self):
        with pytest.raises(ValueError):
            MklClass(p=1.5, D=0.0, M=3)
        with pytest.raises(ValueError):
            MklClass(p=1.5, D=1.0, M=0)
        with pytest.raises(ValueError):
            MklClass(p=0.8, D=1.0, M=3)

    def test_p_star(self):
        assert MklClass(p=1.5, D=1.0, M=2).p_star == pytest.approx(3.0)


def _random_block_pair(rng):
    M = int(rng.integers(1, 8))
    sizes = rng.integers(1, 5, size=M)
    x = BlockVector([rng.standard_normal(s) for s in sizes])
    y = BlockVector([rng.standard_normal(s) for s in sizes])
    return x, y


class TestInequalities:
    @pytest.mark.parametrize("p", [1.0, 4.0 / 3.0, 2.0, 4.0, math.inf])
    def test_block_holder(self, p):
        rng = np.random.default_rng(11)
        pe = Exponent(p)
        for _ in range(1000):
            x, y = _random_block_pair(rng)
            assert x.inner(y) <= (block_norm(x, pe)
                                  * block_norm(y, pe.conjugate())
                                  * (1.0 + 1e-12) + 1e-15)

    def test_lq_lp_conversion(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            M = int(rng.integers(1, 12))
            a = rng.uniform(0.0, 2.0, size=M)
            q = float(rng.uniform(1.0, 4.0))
            p = q + float(rng.uniform(0.0, 5.0))
            if rng.uniform() < 0.25:
                p = math.inf
            lhs = power_norm(a, q)
            rhs = lq_to_lp_factor(M, q, p) * power_norm(a, p)
            assert lhs <= rhs * (1.0 + 1e-12)

    def test_subadditivity(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            M = int(rng.integers(1, 12))
            a = rng.uniform(0.0, 2.0, size=M)
            b = rng.uniform(0.0, 2.0, size=M)
            q = float(rng.uniform(1.0, 8.0))
            lhs = power_norm(a, q) + power_norm(b, q)
            mid = 2.0 ** (1.0 - 1.0 / q) * power_norm(a + b, q)
            assert lhs <= mid * (1.0 + 1e-12)
            assert mid <= 2.0 * power_norm(a + b, q) * (1.0 + 1e-12)

    @pytest.mark.parametrize("p", [1.0, 1.3, 1.5, 2.0, 3.0, math.inf])
    def test_duality_attainment(self, p):
        rng = np.random.default_rng(14)
        for _ in range(200):
            v, _ = _random_block_pair(rng)
            w = holder_witness(v, p)
            target = block_norm(v, Exponent(p).conjugate())
            assert block_norm(w, p) == pytest.approx(1.0, rel=1e-12)
            assert w.inner(v) == pytest.approx(target, rel=1e-9)
