"""Closed-form colony law for the geometric offspring with per-child
thinning, and exact O(1)-per-colony samplers built on it.

For the geometric law P(xi = k) = 2**-(k+1) with each child independently
migrating with probability p, the homebody brood is again geometric with
ratio q = (1-p)/(2-p), and the ancestral colony size C (first passage of
the homebody walk to -1) has the exact law

    P(C = k) = B * rho**k * Gamma(k - 1/2) / Gamma(k + 1),
    rho = 4*q*(1-q),  B = (1-q) / (rho * sqrt(pi)),

while conditionally on C the migrant output is
M ~ NegativeBinomial(2C - 1, 1 - p/2) (failure count).  Sampling C costs
O(1): a dense inverse-CDF table covers the bulk and the tempered k^(-3/2)
tail is drawn by rejection from an exactly invertible discrete power law.

These samplers are law-identical to the birth-by-birth simulator (the
package's tests verify this against it directly) and make the large-scale
convergence experiments tractable: one colony costs a constant amount of
work instead of C birth events.  p = 0 gives the plain total-progeny law
of the geometric branching process.
"""

import math

import numpy as np
from scipy.special import betaln, gammaln

from .seeding import generator

_K_DENSE = 1 << 20
_K_MAX = float(1 << 62)


def _law_params(p):
    if not (0.0 <= p < 1.0):
        raise ValueError("p must lie in [0, 1)")
    q = (1.0 - p) / (2.0 - p)
    rho = 4.0 * q * (1.0 - q)
    log_b = math.log1p(-q) - math.log(rho) - 0.5 * math.log(math.pi)
    return q, rho, log_b


def colony_log_pmf(k, p):
    """log P(C = k) for the thinned-geometric ancestral colony size.

    The Gamma ratio is evaluated as betaln(k-1/2, 3/2) - gammaln(3/2),
    which stays accurate for very large k where subtracting two gammaln
    values of size k*log(k) would cancel catastrophically.
    """
    _, rho, log_b = _law_params(p)
    k = np.asarray(k, dtype=np.float64)
    return (log_b + k * math.log(rho)
            + betaln(k - 0.5, 1.5) - gammaln(1.5))


class ColonySizeSampler:
    """Exact sampler for the ancestral colony size C.

    Dense inverse-CDF table up to ``k_dense``; beyond it, rejection from
    the discrete power proposal P(k) proportional to
    (k-1/2)**(-1/2) - (k+1/2)**(-1/2), whose tail telescopes and inverts
    in closed form.  The rejection constant is the supremum of the exact
    pmf-to-proposal ratio over a log-spaced probe grid (the ratio decays
    like rho**k, so the supremum sits at the head of the tail).
    """

    def __init__(self, p, k_dense=_K_DENSE):
        self.p = float(p)
        _, self.rho, self.log_b = _law_params(p)
        ks = np.arange(1, k_dense + 1, dtype=np.float64)
        pmf = np.exp(colony_log_pmf(ks, p))
        self.cdf = np.cumsum(pmf)
        self.k_dense = k_dense
        self.dense_mass = float(self.cdf[-1])
        # proposal tail normalizer: sum_{k > K} P_prop = (K+1/2)^(-1/2)
        self._prop_norm = (k_dense + 0.5) ** -0.5
        probes = np.unique(np.round(np.geomspace(
            k_dense + 1, _K_MAX, 512)).astype(np.float64))
        self._log_m = float(np.max(self._log_ratio(probes))) + 1e-9

    def _log_prop(self, k):
        """log of the (normalized) discrete power proposal at k.

        (k-1/2)**(-1/2) - (k+1/2)**(-1/2) = 1/((sqrt(a)+sqrt(b))*sqrt(a*b))
        with a = k-1/2, b = k+1/2, which avoids catastrophic cancellation
        for large k.
        """
        a, b = k - 0.5, k + 0.5
        return (-np.log(np.sqrt(a) + np.sqrt(b))
                - 0.5 * (np.log(a) + np.log(b))
                - math.log(self._prop_norm))

    def _log_ratio(self, k):
        return colony_log_pmf(k, self.p) - self._log_prop(k)

    def _sample_tail(self, rng, size):
        out = np.empty(size, dtype=np.int64)
        got = 0
        while got < size:
            m = size - got
            w = self._prop_norm * rng.random(m)
            kf = np.floor(w ** -2.0 + 0.5)
            ok = kf <= _K_MAX
            kf = kf[ok]
            acc_log = self._log_ratio(kf) - self._log_m
            if acc_log.size and acc_log.max() > 1e-6:
                raise AssertionError("tail rejection bound violated")
            keep = np.log(rng.random(kf.size)) < acc_log
            kk = kf[keep].astype(np.int64)
            out[got:got + kk.size] = kk
            got += kk.size
        return out

    def sample(self, rng, size):
        u = rng.random(size)
        out = np.empty(size, dtype=np.int64)
        dense = u < self.dense_mass
        out[dense] = np.searchsorted(self.cdf, u[dense], side="right") + 1
        n_tail = int((~dense).sum())
        if n_tail:
            out[~dense] = self._sample_tail(rng, n_tail)
        return out


def sample_sterilized_pairs(p, size, rng, sampler=None):
    """Exact (C, M) pairs for the geometric law with thinning p."""
    sampler = sampler or ColonySizeSampler(p)
    C = sampler.sample(rng, size)
    if p == 0.0:
        return C, np.zeros(size, dtype=np.int64)
    M = rng.negative_binomial(2 * C - 1, 1.0 - 0.5 * p)
    return C, M.astype(np.int64)


def total_progeny_sample(a, n_reps, seed, sampler=None):
    """Total population from ``a`` ancestors of the plain geometric
    branching process (no migration), as a sum of a iid colony sizes."""
    sampler = sampler or ColonySizeSampler(0.0)
    rng = generator(seed, "geomthin-progeny")
    draws = sampler.sample(rng, a * n_reps).reshape(n_reps, a)
    return draws.sum(axis=1)


def cascade_functionals(p, a, scale, fns, n_reps, seed, stop_threshold=None,
                        colony_budget=10**8, sampler=None):
    """Per-replica sums sum_j f(C_j / scale) over the colony cascade,
    drawing each colony's (C, M) from the closed-form law.

    The cascade is the same FIFO colony process as the birth-level
    simulator: a pending counter starts at ``a`` and each colony replaces
    itself by its M migrants.  Early stopping mirrors the birth-level
    kernels: once every per-function partial sum reaches
    ``stop_threshold`` the replica is abandoned and flagged.

    Returns (sums[n_reps, K], stopped flags, gamma colony counts).
    """
    sampler = sampler or ColonySizeSampler(p)
    rng = generator(seed, "geomthin-cascade")
    K = len(fns)
    sums = np.zeros((n_reps, K))
    stopped = np.zeros(n_reps, dtype=bool)
    gammas = np.zeros(n_reps, dtype=np.int64)
    theta = 1.0 - 0.5 * p
    for rep in range(n_reps):
        pending = a
        block = 1024
        while pending > 0:
            C = sampler.sample(rng, block)
            if p == 0.0:
                M = np.zeros(block, dtype=np.int64)
            else:
                M = rng.negative_binomial(2 * C - 1, theta)
            walk = pending + np.cumsum(M - 1)
            hit = np.nonzero(walk == 0)[0]
            upto = int(hit[0]) + 1 if hit.size else block
            x = C[:upto] / scale
            for k, f in enumerate(fns):
                sums[rep, k] += float(np.sum(f(x)))
            gammas[rep] += upto
            if hit.size:
                break
            pending = int(walk[-1])
            if (stop_threshold is not None
                    and sums[rep].min() >= stop_threshold):
                stopped[rep] = True
                break
            if gammas[rep] > colony_budget:
                raise RuntimeError(
                    f"cascade exceeded colony budget in replica {rep}")
            block = min(2 * block, 1 << 16)
    return sums, stopped, gammas
