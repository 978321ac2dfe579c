"""Limit objects: stable densities, jump measures, the Poisson-built
limit-measure sampler, and the ballot-style identity."""

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from colonist.cumulant import TestFunction, solve_kappa
from colonist.levy import (AtomicMeasure, AxesMeasure, DiagonalMeasure,
                           NeutralMutationMeasure, OneTypeSiblingMeasure,
                           StableParams, ballot_identity_check,
                           check_mass_condition, neutral_levy_marginal,
                           one_type_kernel_sample, sample_Y1,
                           sample_limit_measure, stable_density,
                           stable_density_at_zero,
                           stable_jump_intensity_constant,
                           limit_functional_estimates)
from colonist.seeding import generator


class TestStableDensity:
    def test_beta2_is_gaussian(self):
        # the limit motion at beta = 2 has Gaussian marginal, variance 2b
        for b in (0.5, 1.0, 2.0):
            p = StableParams(2.0, b)
            for x in (-1.0, 0.0, 0.7, 3.0):
                want = math.exp(-x * x / (4 * b)) / math.sqrt(4 * math.pi * b)
                assert stable_density(p, x) == pytest.approx(want, rel=1e-9)

    def test_normalization(self):
        # window integral plus the known power tail of the right flank
        # (each density evaluation is itself a Fourier integral, so the
        # window is kept finite)
        p = StableParams(1.5, 1.0)
        total, _ = integrate.quad(lambda x: stable_density(p, x),
                                  -15.0, 200.0, limit=300)
        tail = stable_jump_intensity_constant(1.5, 1.0) / 1.5 * 200.0 ** -1.5
        assert total + tail == pytest.approx(1.0, abs=1e-4)

    def test_density_at_zero_closed_form(self):
        for beta, b in ((1.3, 0.7), (1.5, 1.0), (2.0, 2.0)):
            p = StableParams(beta, b)
            want = b ** (-1.0 / beta) / (beta * math.gamma(1.0 - 1.0 / beta))
            assert stable_density_at_zero(p) == pytest.approx(want, rel=1e-12)
            assert stable_density(p, 0.0) == pytest.approx(want, rel=1e-8)

    def test_jump_intensity_constant(self):
        # nu(dx) = K x^(-1-beta) dx reproduces psi(q) = b q^beta:
        # b q^beta = Integral (e^(-qx) - 1 + qx) nu(dx)
        beta, b = 1.6, 1.3
        K = stable_jump_intensity_constant(beta, b)
        q = 2.0
        g = lambda x: (math.exp(-q * x) - 1.0 + q * x) * K * x ** (-1 - beta)
        val = (integrate.quad(g, 0, 1, limit=200)[0]
               + integrate.quad(g, 1, np.inf, limit=200)[0])
        assert val == pytest.approx(b * q ** beta, rel=1e-8)


class TestNeutralMutationMeasure:
    def test_marginal_closed_form(self):
        # beta = 2: first-coordinate density 1/(2 sqrt(pi t^3 b)) e^(-c^2 t/(4b))
        b, c = 1.5, 0.8
        for t in (0.1, 1.0, 5.0):
            want = math.exp(-c * c * t / (4 * b)) \
                / (2.0 * math.sqrt(math.pi * t ** 3 * b))
            assert neutral_levy_marginal(2.0, b, c, t) == \
                pytest.approx(want, rel=1e-12)

    def test_x2_mean_is_exactly_one(self):
        assert NeutralMutationMeasure(2.0, 1.0, 1.0).x2_mean() == 1.0
        assert NeutralMutationMeasure(2.0, 2.0, 0.5).x2_mean() == 1.0
        # and by quadrature through the generic diagonal implementation
        m = NeutralMutationMeasure(2.0, 1.0, 1.0)
        generic = DiagonalMeasure(lambda t: neutral_levy_marginal(
            2.0, 1.0, 1.0, t), slope=1.0)
        assert generic.x2_mean() == pytest.approx(1.0, abs=1e-8)

    def test_tail_closed_form_vs_quadrature(self):
        m = NeutralMutationMeasure(2.0, 1.0, 1.0)
        for a in (0.1, 1.0, 4.0):
            want, _ = integrate.quad(
                lambda t: neutral_levy_marginal(2.0, 1.0, 1.0, t),
                a, np.inf, limit=200)
            assert m.tail_mass(a) == pytest.approx(want, rel=1e-9)

    def test_x2_mean_below_closed_form(self):
        # for b = c = 1: erf(sqrt(eps)/2)
        m = NeutralMutationMeasure(2.0, 1.0, 1.0)
        for eps in (1e-6, 1e-2, 1.0):
            assert m.x2_mean_below(eps) == \
                pytest.approx(math.erf(math.sqrt(eps) / 2.0), rel=1e-12)

    def test_laplace_moments_match_quadrature(self):
        m = NeutralMutationMeasure(2.0, 1.0, 1.0)
        f = TestFunction.indicator(0.5, 2.0, 1.0)
        lam = 0.4
        got, got_d = m.laplace_moments(f, lam)
        g = lambda t: neutral_levy_marginal(2.0, 1.0, 1.0, t)
        want = sum(integrate.quad(
            lambda t: g(t) * -math.expm1(-f(t) - lam * t), a, bb, limit=200)[0]
            for a, bb in ((0, 0.5), (0.5, 2.0), (2.0, np.inf)))
        assert got == pytest.approx(want, rel=1e-8)

    def test_truncated_sampler_law(self):
        m = NeutralMutationMeasure(2.0, 1.0, 1.0)
        eps = 1e-4
        s = m.truncated_sampler(eps)
        assert s.rate == pytest.approx(m.tail_mass(eps), rel=1e-12)
        assert s.bias_x2 == pytest.approx(m.x2_mean_below(eps), rel=1e-12)
        rng = generator(31, "nm-sampler")
        x1, x2 = s.sample(rng, 20000)
        assert (x1 >= eps * 0.999).all()
        assert np.allclose(x2, x1)          # slope c = 1

        def cdf(x):
            return 1.0 - np.vectorize(m.tail_mass)(x) / s.rate
        ks = stats.kstest(x1, cdf)
        assert ks.pvalue > 0.01

    def test_inverse_tail_round_trip(self):
        m = NeutralMutationMeasure(2.0, 1.0, 1.0)
        eps = 1e-6
        targets = np.geomspace(1e-8, m.tail_mass(eps) * 0.999, 50)
        x = m._inverse_tail(targets, eps)
        back = np.array([m.tail_mass(v) for v in x])
        assert np.allclose(back, targets, rtol=1e-9)


class TestOneTypeSibling:
    def test_mass_condition_near_one(self):
        m = OneTypeSiblingMeasure(2.0, 1.0)
        value, ok = check_mass_condition(m)
        assert ok and value == pytest.approx(1.0, abs=1e-9)

    def test_kernel_beta2_is_drift(self):
        rng = generator(32, "ot-kernel")
        assert one_type_kernel_sample(2.0, 1.5, 2.0, 0.0, rng) == 6.0

    def test_kernel_laplace_transform(self):
        # E exp(-r * kernel(t)) = exp(-t * Integral (1-e^(-rx))(1-e^(-x)) nu)
        # (bounded functional: reliable CLT despite infinite jump variance)
        beta, b, t, eps, r = 1.5, 1.0, 2.0, 1e-6, 1.0
        K = stable_jump_intensity_constant(beta, b)
        want_exp, _ = integrate.quad(
            lambda x: -math.expm1(-r * x) * -math.expm1(-x)
            * K * x ** (-1.0 - beta), eps, np.inf, limit=200)
        rng = generator(33, "ot-kernel-laplace")
        draws = np.array([one_type_kernel_sample(beta, b, t, eps, rng)
                          for _ in range(3000)])
        vals = np.exp(-r * draws)
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        assert abs(vals.mean() - math.exp(-t * want_exp)) <= 4 * se

    def test_laplace_moments_positive(self):
        m = OneTypeSiblingMeasure(2.0, 1.0)
        f = TestFunction.indicator(0.5, 2.0, 1.0)
        v, vd = m.laplace_moments(f, 0.3)
        assert v > 0 and vd > 0


class TestMassCondition:
    def test_families(self):
        assert check_mass_condition(
            NeutralMutationMeasure(2.0, 1.0, 1.0)) == (1.0, True)
        v, ok = check_mass_condition(AtomicMeasure([(1.0, 0.5, 1.0)]))
        assert v == 0.5 and ok
        v, ok = check_mass_condition(AtomicMeasure([(1.0, 2.0, 1.0)]))
        assert v == 2.0 and not ok


class TestLimitSampler:
    def test_driftless_marks_give_sigma_equal_y(self):
        # with x2 = 0 the level rises at unit slope and never drops
        measure = AtomicMeasure([(1.0, 0.0, 2.0)])
        rng = generator(34, "drift-only")
        counts = []
        for y in (0.5, 1.0, 3.0):
            for _ in range(200):
                s = sample_limit_measure(measure, y, 0.0, rng)
                assert s.sigma_y == pytest.approx(y, abs=1e-12)
                if y == 3.0:
                    counts.append(s.atoms.size)
        # atom count over [0, y) is Poisson(rate * y) = Poisson(6)
        mean = float(np.mean(counts))
        assert abs(mean - 6.0) < 4 * math.sqrt(6.0 / len(counts))

    def test_sigma_exceeds_y_with_jumps(self):
        measure = AtomicMeasure([(1.0, 1.0, 0.5)])
        rng = generator(35, "with-jumps")
        for _ in range(100):
            s = sample_limit_measure(measure, 2.0, 0.0, rng)
            assert s.sigma_y >= 2.0
            # sigma = y + sum of the x2 marks before sigma
            assert s.sigma_y == pytest.approx(2.0 + s.atoms.size, abs=1e-9)

    def test_linearity_in_y(self):
        # -ln E exp(-<M_y, f>) = y * kappa(f)
        measure = AtomicMeasure([(1.0, 1.0, 0.5)])
        f = TestFunction.indicator(0.5, 1.5, math.log(2.0))
        kappa = solve_kappa(measure, f).value
        for y in (1.0, 2.0):
            sums, stopped, _ = limit_functional_estimates(
                measure, y, 0.0, [f], 2 * 10**4, (36, y))
            assert not stopped.any()
            vals = np.exp(-sums[:, 0])
            est = -math.log(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) / vals.mean()
            assert abs(est - y * kappa) <= 3 * se

    def test_max_sigma_censors(self):
        measure = AtomicMeasure([(1.0, 1.0, 5.0)])   # supercritical drift
        rng = generator(37, "censor")
        s = sample_limit_measure(measure, 50.0, 0.0, rng, max_sigma=5.0)
        assert math.isinf(s.sigma_y)


class TestY1Marginal:
    def test_atomic_mean(self):
        measure = AtomicMeasure([(1.0, 1.0, 0.5)])
        y1 = sample_Y1(measure, 0.0, 4 * 10**4, 38)
        se = float(y1.std(ddof=1) / math.sqrt(y1.size))
        assert abs(float(y1.mean()) - 0.5) <= 3 * se

    def test_neutral_mutation_mean_below_one(self):
        measure = NeutralMutationMeasure(2.0, 1.0, 1.0)
        y1 = sample_Y1(measure, 1e-6, 2 * 10**4, 39)
        se = float(y1.std(ddof=1) / math.sqrt(y1.size))
        assert float(y1.mean()) <= 1.0 + 3 * se


class TestBallotIdentity:
    def test_atomic_half_mass(self):
        measure = AtomicMeasure([(1.0, 1.0, 0.5)])
        res = ballot_identity_check(measure, y_max=4.0,
                                    t_bins=[0.0, 1.0, 2.0, 4.0, 8.0],
                                    n_replicas=2 * 10**4, seed=40)
        assert res.passed, res.details

    def test_infinite_activity_rejected(self):
        with pytest.raises(ValueError):
            ballot_identity_check(NeutralMutationMeasure(2.0, 1.0, 1.0),
                                  4.0, [0.0, 1.0], 100, 41)


class TestAxesMeasure:
    def test_kappa_matches_axes_composition(self):
        from colonist.cumulant import kappa_axes
        from colonist.levy import AtomicMeasure1D
        m1 = AtomicMeasure1D([(1.0, 1.0)])
        m2 = AtomicMeasure1D([(0.5, 0.8)])
        axes = AxesMeasure(m1, m2)
        f = TestFunction.indicator(0.5, 1.5, 1.0)
        want = kappa_axes(m1, m2, f)
        got = solve_kappa(axes, f).value
        assert got == pytest.approx(want, rel=1e-8)
