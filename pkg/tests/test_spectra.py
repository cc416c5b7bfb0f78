import math

import numpy as np
import pytest

from mklrad.core import BlockVector
from mklrad.empirical import GeneratorSpec, generate_sample
from mklrad.spectra import (
    AlgebraicSpectrum,
    ExplicitSpectrum,
    FiniteRankSpectrum,
    SpectrumSet,
    algebraic_tail_bound,
    gram_spectrum,
    spectrum_from_config,
    spectrum_to_config,
    tail_sum,
    truncated_min_sum,
)


class TestTailSum:
    def test_algebraic_exact_basel(self):
        spec = SpectrumSet([AlgebraicSpectrum(1.0, 2.0)])
        # sum_{j>=2} j^-2 = pi^2/6 - 1
        assert tail_sum(spec, 0, 1) == pytest.approx(
            math.pi ** 2 / 6.0 - 1.0, rel=1e-12)
        assert algebraic_tail_bound(spec, 0, 1) == pytest.approx(1.0, rel=1e-15)

    def test_finite_rank_past_rank(self):
        spec = SpectrumSet([FiniteRankSpectrum([1.0, 0.5, 0.25])])
        assert tail_sum(spec, 0, 3) == 0.0

    def test_explicit_direct(self):
        spec = SpectrumSet([ExplicitSpectrum([0.5, 0.3, 0.2])])
        assert tail_sum(spec, 0, 1) == pytest.approx(0.5, rel=1e-15)

    def test_bound_dominates_exact(self):
        for alpha in (1.2, 1.5, 2.0, 3.0, 6.0):
            s = AlgebraicSpectrum(0.7, alpha)
            for h in range(1, 60):
                assert s.tail_sum(h) <= s.tail_bound(h) * (1.0 + 1e-12)

    def test_bound_infinite_at_zero(self):
        assert AlgebraicSpectrum(1.0, 2.0).tail_bound(0) == math.inf

    def test_bound_accessor_algebraic_only(self):
        spec = SpectrumSet([ExplicitSpectrum([1.0])])
        with pytest.raises(TypeError):
            algebraic_tail_bound(spec, 0, 1)

    def test_cutoff_tail(self):
        s = AlgebraicSpectrum(1.0, 2.0, j_max=5)
        expect = sum(j ** -2.0 for j in (4, 5))
        assert s.tail_sum(3) == pytest.approx(expect, rel=1e-12)
        assert s.tail_sum(5) == 0.0

    def test_algebraic_tail_matches_partial_sums(self):
        s = AlgebraicSpectrum(0.9, 1.7)
        j = np.arange(1, 2_000_001, dtype=float)
        vals = 0.9 * j ** -1.7
        for h in (0, 1, 7, 100):
            brute = float(vals[h:].sum()) + s.tail_bound(2_000_000)
            # brute force up to 2e6 plus integral remainder brackets the value
            assert abs(s.tail_sum(h) - brute) < 2.0 * s.tail_bound(2_000_000)


class TestTruncatedMinSum:
    def test_explicit_brute_force(self):
        j = np.arange(1, 10 ** 6 + 1, dtype=float)
        vals = j ** -2.0
        spec = SpectrumSet([ExplicitSpectrum(vals)])
        got = truncated_min_sum(spec, 0, 0.25, 1.0)
        expect = float(np.minimum(0.25, vals).sum())
        assert got == pytest.approx(expect, rel=1e-13)
        assert got == pytest.approx(0.894934, abs=2e-6)

    def test_saturated_takes_trace(self):
        spec = SpectrumSet([ExplicitSpectrum([0.5, 0.3]),
                            AlgebraicSpectrum(1.0, 2.0)])
        for m in range(2):
            r_big = 10.0 * spec[m].top()
            assert truncated_min_sum(spec, m, math.inf, 2.0) == pytest.approx(
                2.0 * spec[m].trace(), rel=1e-12)
            assert truncated_min_sum(spec, m, r_big, 2.0) == pytest.approx(
                2.0 * spec[m].trace(), rel=1e-12)

    def test_zero_cases(self):
        spec = SpectrumSet([AlgebraicSpectrum(1.0, 2.0)])
        assert truncated_min_sum(spec, 0, 0.0, 1.0) == 0.0
        assert truncated_min_sum(spec, 0, 1.0, 0.0) == 0.0

    def test_equals_min_over_h(self):
        # the truncation identity: sum_j min(r, c lam_j) = min_h (h r + c tail(h))
        rng = np.random.default_rng(5)
        for _ in range(50):
            k = int(rng.integers(1, 9))
            vals = np.sort(rng.uniform(0.01, 2.0, size=k))[::-1]
            spec = SpectrumSet([ExplicitSpectrum(vals)])
            r = float(rng.uniform(0.005, 2.5))
            c = float(rng.uniform(0.1, 3.0))
            direct = truncated_min_sum(spec, 0, r, c)
            scan = min(h * r + c * spec[0].tail_sum(h) for h in range(k + 2))
            assert direct == pytest.approx(scan, rel=1e-12)

    def test_algebraic_crossover_vs_brute(self):
        s = AlgebraicSpectrum(1.3, 2.2)
        j = np.arange(1, 3_000_001, dtype=float)
        vals = 1.3 * j ** -2.2
        for r, c in ((0.2, 1.0), (0.01, 0.5), (1e-4, 2.0)):
            # beyond the brute cutoff the min always takes the lam branch
            brute = float(np.minimum(r, c * vals).sum()) + c * s.tail_sum(3_000_000)
            got = s.truncated_min_sum(r, c)
            assert got == pytest.approx(brute, rel=1e-9)

    def test_monotone_in_r_and_c(self):
        s = AlgebraicSpectrum(1.0, 1.8)
        rs = np.linspace(0.0, 1.0, 30)
        vals = [s.truncated_min_sum(r, 1.0) for r in rs]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        cs = np.linspace(0.0, 3.0, 30)
        vals = [s.truncated_min_sum(0.3, c) for c in cs]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


class TestValidation:
    def test_rejects_increasing(self):
        with pytest.raises(ValueError):
            ExplicitSpectrum([0.5, 0.7])

    def test_tie_tolerance(self):
        ExplicitSpectrum([0.5, 0.5 + 1e-13, 0.5])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ExplicitSpectrum([0.5, -0.1])

    def test_algebraic_domain(self):
        with pytest.raises(ValueError):
            AlgebraicSpectrum(1.0, 1.0)
        with pytest.raises(ValueError):
            AlgebraicSpectrum(0.0, 2.0)

    def test_config_round_trip(self):
        for s in (ExplicitSpectrum([1.0, 0.5]),
                  FiniteRankSpectrum([1.0, 0.5, 0.0], rank=2),
                  AlgebraicSpectrum(0.7, 2.5, j_max=64),
                  AlgebraicSpectrum(0.7, 2.5)):
            cfg = spectrum_to_config(s)
            again = spectrum_to_config(spectrum_from_config(cfg))
            assert cfg == again


class TestJointSpectrum:
    def test_concatenates_with_multiplicity(self):
        spec = SpectrumSet([ExplicitSpectrum([1.0, 0.25]),
                            ExplicitSpectrum([1.0, 0.5])])
        joint = spec.joint_spectrum()
        assert joint.values.tolist() == [1.0, 1.0, 0.5, 0.25]

    def test_needs_cutoff_for_algebraic(self):
        spec = SpectrumSet([AlgebraicSpectrum(1.0, 2.0)])
        with pytest.raises(ValueError):
            spec.joint_spectrum()


class TestGramSpectrum:
    def test_single_sample(self):
        pt = BlockVector([[2.0, 0.0]])
        g = gram_spectrum([pt], 0)
        assert g.eigenvalues.tolist() == [4.0]
        assert g.trace == pytest.approx(4.0, rel=1e-15)

    def test_two_orthogonal_samples(self):
        pts = [BlockVector([[math.sqrt(2.0), 0.0]]),
               BlockVector([[0.0, math.sqrt(2.0)]])]
        g = gram_spectrum(pts, 0)
        assert g.eigenvalues == pytest.approx([1.0, 1.0], rel=1e-12)
        assert g.trace == pytest.approx(2.0, rel=1e-12)

    def test_trace_matches_population(self):
        spec = SpectrumSet([AlgebraicSpectrum(1.0, 2.0, j_max=400)])
        gen = GeneratorSpec(spec=spec, seed=21)
        n = 50
        data = generate_sample(gen, n)
        g = gram_spectrum(data, 0)
        # squared norms are deterministic under the Rademacher law, so the
        # Gram trace equals the truncated population trace exactly
        assert g.trace == pytest.approx(spec[0].trace(), rel=1e-12)

    def test_nonzero_count_bounded_by_rank(self):
        spec = SpectrumSet([FiniteRankSpectrum([1.0, 0.5, 0.25])])
        gen = GeneratorSpec(spec=spec, seed=3)
        data = generate_sample(gen, 20)
        g = gram_spectrum(data, 0)
        assert int((g.eigenvalues > 1e-12).sum()) <= min(20, 3)

    def test_centered_below_uncentered(self):
        # rank-one downdate: eigenvalues of the centered sample covariance
        # never exceed the uncentered ones
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 6)) + 0.7
        unc = np.linalg.eigvalsh(X.T @ X / 40)[::-1]
        mu = X.mean(axis=0)
        cen = np.linalg.eigvalsh(X.T @ X / 40 - np.outer(mu, mu))[::-1]
        assert np.all(cen <= unc + 1e-9)
