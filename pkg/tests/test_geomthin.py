"""Closed-form colony law for the geometric offspring with thinning,
validated against the birth-by-birth simulator."""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import binom

from colonist import geomthin, kernels
from colonist.colony import sterilized_sample
from colonist.harness import two_sample_chi2, _joint_keys
from colonist.offspring import ConcreteModel, MigrationRule, OffspringLaw
from colonist.seeding import generator

GEO = OffspringLaw.geometric()


def _model(p):
    return ConcreteModel(GEO, MigrationRule.thinning(p), 1, 1, 1)


class TestPmf:
    def test_size_one_probability(self):
        # P(C = 1) = P(no homebody children) = 1 - q, q = (1-p)/(2-p)
        for p in (0.0, 0.1, 0.5):
            q = (1 - p) / (2 - p)
            assert math.exp(geomthin.colony_log_pmf(1, p)) == \
                pytest.approx(1 - q, rel=1e-12)

    def test_p_zero_is_catalan_total_progeny(self):
        # plain geometric branching: P(C = k) = binom(2k-2, k-1)/k * 2^-(2k-1)
        for k in range(1, 16):
            want = binom(2 * k - 2, k - 1) / k * 2.0 ** -(2 * k - 1)
            assert math.exp(geomthin.colony_log_pmf(k, 0.0)) == \
                pytest.approx(want, rel=1e-10)

    def test_sums_to_one(self):
        ks = np.arange(1, 2 * 10**5)
        for p in (0.05, 0.3):
            total = float(np.sum(np.exp(geomthin.colony_log_pmf(ks, p))))
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_rejects_bad_p(self):
        with pytest.raises(ValueError):
            geomthin.colony_log_pmf(1, 1.0)
        with pytest.raises(ValueError):
            geomthin.colony_log_pmf(1, -0.1)


class TestColonySizeSampler:
    def test_matches_pmf(self):
        p = 0.3
        sampler = geomthin.ColonySizeSampler(p, k_dense=1 << 12)
        rng = generator(51, "gt-sampler")
        draws = sampler.sample(rng, 10**5)
        kmax = 40
        obs = np.bincount(np.minimum(draws, kmax), minlength=kmax + 1)[1:]
        probs = np.exp(geomthin.colony_log_pmf(np.arange(1, kmax + 1), p))
        probs[-1] = 1.0 - probs[:-1].sum()
        res = stats.chisquare(obs, probs * draws.size)
        assert res.pvalue > 0.01

    def test_tail_path_exercised(self):
        # tiny dense table forces most draws through the tail rejection
        sampler = geomthin.ColonySizeSampler(0.0, k_dense=8)
        rng = generator(52, "gt-tail")
        draws = sampler.sample(rng, 20000)
        assert (draws >= 1).all()
        # P(C > 8) = survival of the k^(-3/2) law; compare tail fraction
        ks = np.arange(1, 9)
        p_tail = 1.0 - float(np.sum(np.exp(
            geomthin.colony_log_pmf(ks, 0.0))))
        frac = float(np.mean(draws > 8))
        se = math.sqrt(p_tail * (1 - p_tail) / draws.size)
        assert abs(frac - p_tail) <= 4 * se


class TestAgainstBirthLevelSimulator:
    def test_joint_pair_law(self):
        p = 0.3
        rng = generator(53, "gt-pairs")
        C1, M1 = geomthin.sample_sterilized_pairs(p, 4 * 10**4, rng)
        C2, M2 = sterilized_sample(_model(p), 4 * 10**4, 54)
        _, _, pval = two_sample_chi2(_joint_keys(C1, M1),
                                     _joint_keys(C2, M2))
        assert pval > 0.01

    def test_colony_marginal_small_p(self):
        p = 0.01
        rng = generator(55, "gt-marg")
        C1, _ = geomthin.sample_sterilized_pairs(p, 2 * 10**4, rng)
        C2, _ = sterilized_sample(_model(p), 2 * 10**4, 56)
        ks = stats.ks_2samp(C1, C2)
        assert ks.pvalue > 0.01

    def test_no_migrants_at_p_zero(self):
        rng = generator(57, "gt-p0")
        _, M = geomthin.sample_sterilized_pairs(0.0, 1000, rng)
        assert (M == 0).all()


class TestTotalProgeny:
    def test_against_birth_level_kernel(self):
        from colonist.offspring import model_spec
        from colonist.seeding import derive_seed_words
        a = 3
        z1 = geomthin.total_progeny_sample(a, 4000, 58)
        spec = model_spec(GEO, MigrationRule.thinning(0.0))
        z2, capped = kernels.total_progeny(
            spec, a, 4000, 10**9, derive_seed_words(59, "tp"))
        assert not np.asarray(capped, dtype=bool).any()
        ks = stats.ks_2samp(z1, z2)
        assert ks.pvalue > 0.01

    def test_stable_half_passage_limit(self):
        # zeta_n / n^2 converges to the first-passage law with
        # distribution function erfc(a_eff / (2 sqrt(t)))
        n = 2000
        z = geomthin.total_progeny_sample(n, 5000, 100)
        x = z / float(n * n)
        ks = stats.kstest(x, lambda t: special_erfc_cdf(1.0, t))
        assert ks.pvalue > 0.01


def special_erfc_cdf(a, t):
    from scipy.special import erfc
    return erfc(a / (2.0 * np.sqrt(t)))


class TestCascade:
    def test_matches_birth_level_functionals(self):
        from colonist.cumulant import TestFunction
        from colonist.offspring import ModelFamily
        fam = ModelFamily(GEO, "thinning", a=1.0, c=1.0)
        model = fam.model_at(30)
        f = TestFunction.indicator(0.25, 2.0, 4.0)
        n_reps = 4000
        sums_f, stopped_f, _ = geomthin.cascade_functionals(
            model.rule.p, model.a_n, float(model.alpha), [f], n_reps, 61,
            stop_threshold=8.0)
        from colonist.colony import laplace_functional_estimate
        est_b, se_b, info = laplace_functional_estimate(
            model, model.a_n, f, n_reps, 62, scale=float(model.alpha),
            stop_threshold=8.0)
        vals = np.exp(-sums_f[:, 0])
        est_f = float(vals.mean())
        se_f = float(vals.std(ddof=1) / math.sqrt(n_reps))
        bias = math.exp(-8.0) * (float(np.mean(stopped_f))
                                 + info["stopped_fraction"])
        assert abs(est_f - est_b) <= 3 * math.hypot(se_f, se_b) + bias

    def test_gamma_counts_are_positive(self):
        sums, stopped, gammas = geomthin.cascade_functionals(
            0.1, 5, 10.0, [], 50, 63)
        assert (gammas >= 5).all()
        assert sums.shape == (50, 0)
