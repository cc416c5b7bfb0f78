import itertools
import math

import numpy as np
import pytest

from mklrad.core import MklClass
from mklrad.bounds import (
    BoundReport,
    LocalQuery,
    LowerBoundPreconditionError,
    grc_empirical,
    grc_population,
    lrc_hparam,
    lrc_lower,
    lrc_upper_p1,
    lrc_upper_p12,
    lrc_upper_pge2,
    t_candidates,
)
from mklrad.spectra import AlgebraicSpectrum, ExplicitSpectrum, FiniteRankSpectrum, SpectrumSet


def _unit_spec(M):
    return SpectrumSet([AlgebraicSpectrum(1.0, 2.0)] * M)


class TestGrcEmpirical:
    def test_single_kernel_substitution(self):
        cls = MklClass(p=2.0, D=1.0, M=1)
        rep = grc_empirical(cls, [1.0], 100, t=2.0)
        assert rep.value == pytest.approx(math.sqrt(2.0 / 100.0), rel=1e-14)

    def test_equal_traces_at_two_log_m(self):
        # at t* = 2 log M the bound is D sqrt(2 log M * e * tau / n),
        # because M^(2/t*) = M^(1/log M) = e exactly
        M, tau, n, D = 50, 0.7, 400, 1.3
        cls = MklClass(p=1.0, D=D, M=M)
        x = 2.0 * math.log(M)
        rep = grc_empirical(cls, [tau] * M, n, t=x / (x - 1.0))
        expect = D * math.sqrt(2.0 * math.log(M) * math.e * tau / n)
        assert rep.value == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("p,M", [(1.0, 40), (1.2, 40), (1.05, 8), (1.9, 300)])
    def test_grid_minimizer_near_analytic(self, p, M):
        cls = MklClass(p=p, D=1.0, M=M)
        rep = grc_empirical(cls, [1.0] * M, 1000)
        # unconstrained minimizer of x M^(2/x) is x = 2 log M, clamped to p*
        target = min(2.0 * math.log(M), cls.p_star)
        got = 1.0 / (1.0 - 1.0 / rep.t_used)
        step = (2.0 / p) ** (1.0 / 63.0)
        assert got == pytest.approx(target, rel=2.0 * (step - 1.0) + 1e-9)

    def test_rejects_t_below_p(self):
        cls = MklClass(p=1.5, D=1.0, M=2)
        with pytest.raises(ValueError):
            grc_empirical(cls, [1.0, 1.0], 10, t=1.2)

    def test_degenerate_single_kernel_p1(self):
        cls = MklClass(p=1.0, D=1.0, M=1)
        rep = grc_empirical(cls, [1.0], 100)
        assert rep.t_used == 2.0
        assert rep.value == pytest.approx(math.sqrt(2.0 / 100.0), rel=1e-12)

    def test_zero_traces(self):
        cls = MklClass(p=1.0, D=1.0, M=2)
        assert grc_empirical(cls, [0.0, 0.0], 10).value == 0.0

    def test_invariant_under_sample_duplication(self):
        # tr(K)/n is invariant when every sample is duplicated
        cls = MklClass(p=1.5, D=1.0, M=2)
        a = grc_empirical(cls, [0.4, 0.9], 100, t=2.0)
        b = grc_empirical(cls, [0.4, 0.9], 200, t=2.0)
        assert a.value == pytest.approx(b.value * math.sqrt(2.0), rel=1e-12)


class TestGrcPopulation:
    def test_discard_rule_at_t2(self):
        cls = MklClass(p=2.0, D=1.0, M=1)
        rep = grc_population(cls, _unit_spec(1), 100, 1.0, t=2.0)
        # trace of Algebraic(1,2) is pi^2/6, not 1; build a unit-trace one
        spec1 = SpectrumSet([ExplicitSpectrum([1.0])])
        rep = grc_population(cls, spec1, 100, 1.0, t=2.0)
        assert rep.remainder_term == 0.0
        assert rep.value == pytest.approx(2.0 * math.sqrt(math.e / 100.0),
                                          rel=1e-14)

    def test_t_one_signals(self):
        cls = MklClass(p=1.0, D=1.0, M=2)
        spec = SpectrumSet([ExplicitSpectrum([1.0])] * 2)
        with pytest.raises(ValueError):
            grc_population(cls, spec, 100, 1.0, t=1.0)

    def test_log_m_conjugate_dual_path(self):
        # independent arithmetic: at t = (log M)* with unit traces,
        # main = log M * sqrt(e * M^(2/log M) / n) and M^(1/log M) = e
        M, n = 1000, 10 ** 4
        cls = MklClass(p=1.0, D=1.0, M=M)
        spec = SpectrumSet([ExplicitSpectrum([1.0])] * M)
        x = math.log(M)
        rep = grc_population(cls, spec, n, 1.0, t=x / (x - 1.0))
        main = x * math.sqrt(math.e * float(M) ** (2.0 / x) / n)
        rem = math.sqrt(math.e) * float(M) ** (1.0 / x) * x / n
        assert rep.main_term == pytest.approx(main, rel=1e-12)
        assert rep.remainder_term == pytest.approx(rem, rel=1e-12)
        assert main == pytest.approx(0.309585, abs=1e-6)
        assert rem == pytest.approx(0.00309585, abs=1e-8)

    def test_report_invariant(self):
        cls = MklClass(p=1.3, D=2.0, M=5)
        rep = grc_population(cls, _unit_spec(5), 250, 1.5)
        assert rep.value == pytest.approx(rep.main_term + rep.remainder_term,
                                          rel=1e-12)
        assert cls.p.p <= rep.t_used <= 2.0


class TestLrcUpperP12:
    def test_r_zero_leaves_remainder(self):
        cls = MklClass(p=1.5, D=1.0, M=3)
        q = LocalQuery(cls=cls, r=0.0, n=100, B=1.0)
        rep = lrc_upper_p12(q, _unit_spec(3), t=2.0)
        assert rep.main_term == 0.0
        assert rep.value == pytest.approx(
            math.sqrt(math.e) * 3.0 ** 0.5 * 2.0 / 100.0, rel=1e-12)

    def test_saturated_regime(self):
        spec = SpectrumSet([ExplicitSpectrum([0.5, 0.2]),
                            ExplicitSpectrum([0.4])])
        cls = MklClass(p=1.5, D=1.0, M=2)
        t = 1.8
        ts = t / (t - 1.0)
        c = math.e * ts ** 2
        r = 2.0 * c * 0.5 / 2.0 ** (1.0 - 2.0 / ts)  # saturate both kernels
        q = LocalQuery(cls=cls, r=r, n=100, B=1.0)
        rep = lrc_upper_p12(q, spec, t=t)
        traces = np.array([0.7, 0.4])
        expect = math.sqrt(16.0 / 100.0 * c
                           * float(np.sum(traces ** (ts / 2.0))) ** (2.0 / ts))
        assert rep.main_term == pytest.approx(expect, rel=1e-12)

    def test_single_kernel_against_brute_force(self):
        spec = _unit_spec(1)
        cls = MklClass(p=2.0, D=1.0, M=1)
        q = LocalQuery(cls=cls, r=0.25, n=100, B=1.0)
        rep = lrc_upper_p12(q, spec, t=2.0)
        j = np.arange(1, 2_000_001, dtype=float)
        inner = float(np.minimum(0.25, 4.0 * math.e * j ** -2.0).sum())
        oracle = math.sqrt(16.0 / 100.0 * inner) + math.sqrt(math.e) * 2.0 / 100.0
        assert rep.value == pytest.approx(oracle, rel=1e-5)

    def test_rejects_bad_domain(self):
        with pytest.raises(ValueError):
            lrc_upper_p12(LocalQuery(cls=MklClass(p=3.0, D=1.0, M=1), r=0.1,
                                     n=10, B=1.0), _unit_spec(1))
        cls = MklClass(p=1.5, D=1.0, M=1)
        with pytest.raises(ValueError):
            lrc_upper_p12(LocalQuery(cls=cls, r=0.1, n=10, B=1.0),
                          _unit_spec(1), t=3.0)

    def test_const_mult_scaling(self):
        cls = MklClass(p=1.5, D=1.0, M=2)
        q = LocalQuery(cls=cls, r=1e9, n=100, B=1.0)  # lam branch everywhere
        a = lrc_upper_p12(q, _unit_spec(2), t=2.0, const_mult=1.0)
        b = lrc_upper_p12(q, _unit_spec(2), t=2.0, const_mult=2.0)
        assert b.main_term == pytest.approx(math.sqrt(2.0) * a.main_term,
                                            rel=1e-12)


class TestLrcUpperPge2:
    def test_r_zero(self):
        cls = MklClass(p=2.0, D=1.0, M=1)
        q = LocalQuery(cls=cls, r=0.0, n=50, B=1.0)
        assert lrc_upper_pge2(q, [1.0, 0.5]).value == 0.0

    def test_single_kernel_shape(self):
        lam = np.array([0.8, 0.3, 0.1])
        cls = MklClass(p=2.0, D=1.0, M=1)
        q = LocalQuery(cls=cls, r=0.2, n=50, B=1.0)
        rep = lrc_upper_pge2(q, lam)
        expect = math.sqrt(2.0 / 50.0 * float(np.minimum(0.2, lam).sum()))
        assert rep.value == pytest.approx(expect, rel=1e-13)

    def test_saturated_takes_trace(self):
        # p* = 2 at p = 2 makes the M factor equal one
        lam = np.array([0.5, 0.25, 0.125, 0.0625])
        cls = MklClass(p=2.0, D=1.0, M=4)
        q = LocalQuery(cls=cls, r=1.0, n=80, B=1.0)
        rep = lrc_upper_pge2(q, lam)
        assert rep.value == pytest.approx(
            math.sqrt(2.0 * float(lam.sum()) / 80.0), rel=1e-13)

    def test_p_infinity(self):
        cls = MklClass(p=math.inf, D=1.0, M=4)
        q = LocalQuery(cls=cls, r=1e9, n=80, B=1.0)
        lam = np.array([0.5, 0.25])
        rep = lrc_upper_pge2(q, lam)
        assert rep.value == pytest.approx(
            math.sqrt(2.0 / 80.0 * 4.0 * float(lam.sum())), rel=1e-13)

    def test_rejects_p_below_2(self):
        cls = MklClass(p=1.5, D=1.0, M=1)
        with pytest.raises(ValueError):
            lrc_upper_pge2(LocalQuery(cls=cls, r=0.1, n=10, B=1.0), [1.0])


class TestLrcUpperP1:
    def test_r_zero(self):
        cls = MklClass(p=1.0, D=1.0, M=10)
        q = LocalQuery(cls=cls, r=0.0, n=100, B=2.0)
        rep = lrc_upper_p1(q, _unit_spec(10))
        assert rep.value == pytest.approx(
            math.sqrt(2.0) * math.e ** 1.5 * math.log(10.0) / 100.0, rel=1e-12)

    def test_rejects_single_kernel(self):
        cls = MklClass(p=1.0, D=1.0, M=1)
        with pytest.raises(ValueError):
            lrc_upper_p1(LocalQuery(cls=cls, r=0.1, n=10, B=1.0), _unit_spec(1))

    def test_identical_kernels_consistency(self):
        # with identical kernels the p=1 form coincides with the general
        # bound at t = (log M)*, and the grid optimizer finds that t
        M = 1000
        spec = _unit_spec(M)
        cls = MklClass(p=1.0, D=1.0, M=M)
        q = LocalQuery(cls=cls, r=1e-3, n=10 ** 4, B=1.0)
        v1 = lrc_upper_p1(q, spec)
        x = math.log(M)
        v12_at = lrc_upper_p12(q, spec, t=x / (x - 1.0))
        v12_opt = lrc_upper_p12(q, spec)
        assert v1.value == pytest.approx(v12_at.value, rel=1e-12)
        assert v1.value <= v12_opt.value * (1.0 + 1e-9)


class TestLrcHparam:
    def test_h_zero(self):
        spec = SpectrumSet([ExplicitSpectrum([0.6, 0.3]),
                            ExplicitSpectrum([0.5])])
        cls = MklClass(p=1.5, D=1.2, M=2)
        q = LocalQuery(cls=cls, r=0.4, n=100, B=1.0)
        rep = lrc_hparam(q, spec, [0, 0], t=2.0)
        tails = np.array([0.9, 0.5])
        second = math.sqrt(4.0 * math.e * 4.0 * 1.2 ** 2 / 100.0
                           * float(np.sum(tails)))
        assert rep.main_term == pytest.approx(second, rel=1e-12)
        assert rep.h_used == (0, 0)

    def test_exhausted_tails(self):
        spec = SpectrumSet([FiniteRankSpectrum([0.6, 0.3]),
                            FiniteRankSpectrum([0.5])])
        cls = MklClass(p=1.5, D=1.0, M=2)
        q = LocalQuery(cls=cls, r=0.4, n=100, B=1.0)
        rep = lrc_hparam(q, spec, [2, 1], t=2.0)
        assert rep.main_term == pytest.approx(
            math.sqrt(4.0 * 0.4 * 3.0 / 100.0), rel=1e-12)

    def test_factor_two_envelope(self):
        # minimizing the truncation form over h brackets the min-sum form:
        # below it always, above it within the combination losses, which are
        # a plain factor 2 at t = 2 and 2 M^(1/2 - 1/t*) in general
        rng = np.random.default_rng(3)
        for _ in range(25):
            M = int(rng.integers(1, 4))
            specs = [ExplicitSpectrum(np.sort(
                rng.uniform(0.02, 1.0, size=rng.integers(1, 9)))[::-1])
                for _ in range(M)]
            spec = SpectrumSet(specs)
            cls = MklClass(p=float(rng.uniform(1.0, 2.0)), D=1.0, M=M)
            q = LocalQuery(cls=cls, r=float(rng.uniform(0.01, 1.0)),
                           n=200, B=1.0)
            t = float(rng.uniform(cls.p.p, 2.0))
            ranks = [s.values.size for s in specs]

            def scan(tv):
                return min(
                    lrc_hparam(q, spec, h, t=tv).main_term
                    for h in itertools.product(*[range(k + 1) for k in ranks]))

            best = scan(t)
            main12 = lrc_upper_p12(q, spec, t=t).main_term
            ts = t / (t - 1.0)
            envelope = 2.0 * float(M) ** (0.5 - 1.0 / ts)
            assert best <= main12 * (1.0 + 1e-9)
            assert main12 <= envelope * best * (1.0 + 1e-9)
            # at t = 2 the conversion is lossless and the plain 2 holds
            best2 = scan(2.0)
            main12_t2 = lrc_upper_p12(q, spec, t=2.0).main_term
            assert best2 <= main12_t2 * (1.0 + 1e-9)
            assert main12_t2 <= 2.0 * best2 * (1.0 + 1e-9)


class TestLrcLower:
    def test_boundary_r_accepted(self):
        cls = MklClass(p=1.5, D=1.0, M=1)
        q = LocalQuery(cls=cls, r=1.0 / 50.0, n=50, B=1.0)
        lrc_lower(q, [1.0, 0.5], c_abs=1.0)

    def test_single_kernel_form(self):
        lam = np.array([0.9, 0.4, 0.1])
        cls = MklClass(p=1.5, D=1.0, M=1)
        q = LocalQuery(cls=cls, r=0.3, n=50, B=1.0)
        rep = lrc_lower(q, lam, c_abs=1.0)
        assert rep.value == pytest.approx(
            math.sqrt(float(np.minimum(0.3, lam).sum()) / 50.0), rel=1e-13)

    def test_preconditions_signal_distinctly(self):
        cls = MklClass(p=1.5, D=1.0, M=1)
        with pytest.raises(LowerBoundPreconditionError):
            lrc_lower(LocalQuery(cls=cls, r=0.5, n=50, B=1.0), [1e-9])
        with pytest.raises(LowerBoundPreconditionError):
            lrc_lower(LocalQuery(cls=cls, r=1e-4, n=50, B=1.0), [1.0])

    @pytest.mark.parametrize("p", [1.25, 1.5, 2.0])
    def test_upper_lower_ratio_bounded_in_r(self, p):
        n, M = 1000, 4
        spec = _unit_spec(M)
        cls = MklClass(p=p, D=1.0, M=M)
        ratios = []
        for r in np.geomspace(1.0 / n, 1.0, 12):
            q = LocalQuery(cls=cls, r=float(r), n=n, B=spec.traces().max())
            up = lrc_upper_p12(q, spec, t=p).value
            lo = lrc_lower(q, spec[0], c_abs=1.0).value
            ratios.append(up / lo)
        ps = p / (p - 1.0) if p > 1 else math.inf
        assert max(ratios) <= 4.0 * math.sqrt(math.e) * ps + 4.0
        assert max(ratios) / min(ratios) <= 2.5


class TestBoundProperties:
    def _bounds_on_grid(self, fn, rs):
        return np.array([fn(r) for r in rs])

    def test_monotone_and_concave_in_r(self):
        spec = _unit_spec(4)
        rs = np.linspace(0.0, 0.5, 41)
        cases = {
            "p12": lambda r: lrc_upper_p12(
                LocalQuery(cls=MklClass(p=1.3, D=1.0, M=4), r=float(r),
                           n=500, B=1.0), spec).value,
            "pge2": lambda r: lrc_upper_pge2(
                LocalQuery(cls=MklClass(p=2.5, D=1.0, M=4), r=float(r),
                           n=500, B=1.0),
                SpectrumSet([AlgebraicSpectrum(1.0, 2.0, j_max=200)] * 4
                            ).joint_spectrum()).value,
            "p1": lambda r: lrc_upper_p1(
                LocalQuery(cls=MklClass(p=1.0, D=1.0, M=4), r=float(r),
                           n=500, B=1.0), spec).value,
        }
        for name, fn in cases.items():
            vals = self._bounds_on_grid(fn, rs)
            assert np.all(np.diff(vals) >= -1e-12), name
            assert np.all(np.diff(vals, 2) <= 1e-9), name

    def test_monotone_in_p_at_common_t(self):
        spec = _unit_spec(3)
        q1 = LocalQuery(cls=MklClass(p=1.2, D=1.0, M=3), r=0.2, n=300, B=1.0)
        q2 = LocalQuery(cls=MklClass(p=1.7, D=1.0, M=3), r=0.2, n=300, B=1.0)
        at_t2_low = lrc_upper_p12(q1, spec, t=2.0).value
        at_t2_high = lrc_upper_p12(q2, spec, t=2.0).value
        assert at_t2_low <= at_t2_high * (1.0 + 1e-12)
        # optimizing over the wider range [p1, 2] can only help
        assert lrc_upper_p12(q1, spec).value <= \
            lrc_upper_p12(q2, spec).value * (1.0 + 1e-12)

    def test_t_grid_refinement_changes_little(self):
        spec = _unit_spec(6)
        cls = MklClass(p=1.1, D=1.0, M=6)
        q = LocalQuery(cls=cls, r=0.05, n=400, B=1.0)
        coarse = lrc_upper_p12(q, spec).value
        fine = min(
            lrc_upper_p12(q, spec, t=float(t)).value
            for t in np.geomspace(cls.p.p, 2.0, 640))
        assert abs(coarse - fine) / fine < 0.005

        g = grc_empirical(cls, [1.0] * 6, 400).value
        g_fine = min(grc_empirical(cls, [1.0] * 6, 400, t=float(t)).value
                     for t in np.geomspace(cls.p.p, 2.0, 640))
        assert abs(g - g_fine) / g_fine < 0.005

    def test_degree_one_homogeneity(self):
        spec = _unit_spec(3)
        c = 3.7
        for fn in (
            lambda D, r: lrc_upper_p12(LocalQuery(
                cls=MklClass(p=1.4, D=D, M=3), r=r, n=300, B=1.0), spec).value,
            lambda D, r: lrc_upper_p1(LocalQuery(
                cls=MklClass(p=1.0, D=D, M=3), r=r, n=300, B=1.0), spec).value,
            lambda D, r: lrc_hparam(LocalQuery(
                cls=MklClass(p=1.4, D=D, M=3), r=r, n=300, B=1.0), spec,
                [1, 2, 0], t=1.7).value,
        ):
            base = fn(1.0, 0.2)
            scaled = fn(c, c * c * 0.2)
            assert scaled == pytest.approx(c * base, rel=1e-10)

    def test_t_candidates_include_analytic_points(self):
        grid = t_candidates(1.0, 1000)
        x2, x1 = 2.0 * math.log(1000.0), math.log(1000.0)
        for x in (x2, x1):
            assert np.any(np.isclose(grid, x / (x - 1.0), rtol=1e-12))

    def test_report_validation(self):
        with pytest.raises(ValueError):
            BoundReport(value=1.0, main_term=1.0, remainder_term=0.0,
                        t_used=2.0, formula_id="NOPE")
