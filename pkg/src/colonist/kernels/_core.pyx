# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the branching-with-emigration simulators.

Every routine here consumes raw 64-bit entropy from an inline xoshiro256++
generator seeded with four words derived from a numpy SeedSequence.  The
pure-python fallback in ``_fallback.py`` implements the same contracts with
vectorized numpy; the two backends are statistically equivalent but do not
share bit streams.
"""

from libc.math cimport log, exp, floor
from libc.stdint cimport uint64_t, int64_t

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #  define COLONIST_CTZLL(x) ((int)__builtin_ctzll(x))
    #else
    static int COLONIST_CTZLL(unsigned long long x) {
        int n = 0;
        while (!(x & 1)) { x >>= 1; n++; }
        return n;
    }
    #endif
    """
    int COLONIST_CTZLL(unsigned long long x) nogil

import numpy as np

LAW_GEOMETRIC = 0
LAW_TABLE = 1

RULE_NONE = 0
RULE_THINNING = 1
RULE_ALL_OR_NOTHING = 2
RULE_CUTOFF = 3

BACKEND_NAME = "compiled"


class StepBudgetExceeded(RuntimeError):
    """A simulation ran past its birth budget; carries partial diagnostics."""

    def __init__(self, message, births=None, replica=None):
        super().__init__(message)
        self.births = births
        self.replica = replica


# ---------------------------------------------------------------------------
# xoshiro256++
# ---------------------------------------------------------------------------

cdef struct Rng:
    uint64_t s0, s1, s2, s3


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t rng_next(Rng* r) nogil:
    cdef uint64_t result = _rotl(r.s0 + r.s3, 23) + r.s0
    cdef uint64_t t = r.s1 << 17
    r.s2 ^= r.s0
    r.s3 ^= r.s1
    r.s1 ^= r.s2
    r.s0 ^= r.s3
    r.s2 ^= t
    r.s3 = _rotl(r.s3, 45)
    return result


cdef inline double rng_unit(Rng* r) nogil:
    # uniform in (0, 1); never returns exactly 0
    cdef double u = (rng_next(r) >> 11) * (1.0 / 9007199254740992.0)
    if u <= 0.0:
        u = 1.1102230246251565e-16
    return u


cdef void rng_seed(Rng* r, object seed_words):
    cdef uint64_t[:] w = np.asarray(seed_words, dtype=np.uint64)
    r.s0, r.s1, r.s2, r.s3 = w[0], w[1], w[2], w[3]
    if r.s0 == 0 and r.s1 == 0 and r.s2 == 0 and r.s3 == 0:
        r.s0 = 0x9E3779B97F4A7C15


# ---------------------------------------------------------------------------
# model: offspring law + migration rule
# ---------------------------------------------------------------------------

cdef struct Model:
    int law_kind
    const double* cdf          # for LAW_TABLE
    int64_t cdf_len
    int rule_kind
    double p                   # thinning probability
    double log1mp              # log(1 - p), -inf when p == 1
    double inv_scale           # 1/n for all-or-nothing
    int64_t cutoff
    const double* aon_keep     # exp(-l/n) table, len aon_len
    int64_t aon_len


cdef inline int64_t draw_xi(Rng* r, Model* m) nogil:
    cdef int64_t k = 0
    cdef uint64_t u
    cdef double v
    cdef int64_t lo, hi, mid
    if m.law_kind == 0:  # Geometric(1/2) on {0,1,...}: trailing one-bits
        while True:
            u = rng_next(r)
            if u != <uint64_t>0xFFFFFFFFFFFFFFFF:
                return k + COLONIST_CTZLL(~u)
            k += 64
    else:
        v = rng_unit(r)
        lo = 0
        hi = m.cdf_len
        while lo < hi:
            mid = (lo + hi) >> 1
            if m.cdf[mid] <= v:
                lo = mid + 1
            else:
                hi = mid
        if lo >= m.cdf_len:
            lo = m.cdf_len - 1
        return lo


cdef inline int64_t thin_gap(Rng* r, Model* m) nogil:
    # children until (and including) the next migrant in the child stream
    cdef double g = floor(log(rng_unit(r)) / m.log1mp)
    if g > 4.6e18:
        g = 4.6e18
    return 1 + <int64_t>g


cdef inline int64_t draw_migrants(Rng* r, Model* m, int64_t xi, int64_t* cd) nogil:
    cdef int64_t xm = 0
    cdef int64_t rem
    cdef double keep
    if m.rule_kind == 0 or xi == 0:
        return 0
    if m.rule_kind == 1:  # per-child Bernoulli(p), via geometric gaps
        rem = xi
        while cd[0] <= rem:
            xm += 1
            rem -= cd[0]
            cd[0] = thin_gap(r, m)
        cd[0] -= rem
        return xm
    if m.rule_kind == 2:  # all-or-nothing: keep with prob exp(-xi/n)
        if xi < m.aon_len:
            keep = m.aon_keep[xi]
        else:
            keep = exp(-xi * m.inv_scale)
        if rng_unit(r) < keep:
            return 0
        return xi
    # cutoff
    if xi > m.cutoff:
        return xi - m.cutoff
    return 0


cdef int build_model(Model* m, object spec) except -1:
    # The caller must keep `spec` alive while `m` is in use: the Model
    # stores raw pointers into spec's (contiguous float64) arrays.
    cdef double[::1] cdf = spec.cdf
    cdef double[::1] aon_keep = spec.aon_keep
    cdef int law_kind = spec.law_kind
    cdef int rule_kind = spec.rule_kind
    cdef double p = spec.p
    cdef double inv_scale = spec.inv_scale
    cdef int64_t cutoff = spec.cutoff
    m.law_kind = law_kind
    if cdf.shape[0] > 0:
        m.cdf = &cdf[0]
    else:
        m.cdf = NULL
    m.cdf_len = cdf.shape[0]
    m.rule_kind = rule_kind
    m.p = p
    if p >= 1.0:
        m.log1mp = -1e308
    elif p > 0.0:
        m.log1mp = log(1.0 - p)
    else:
        m.log1mp = 0.0
    m.inv_scale = inv_scale
    m.cutoff = cutoff
    if aon_keep.shape[0] > 0:
        m.aon_keep = &aon_keep[0]
    else:
        m.aon_keep = NULL
    m.aon_len = aon_keep.shape[0]
    return 0


# ---------------------------------------------------------------------------
# sterilized pair (C, M): generation-by-generation colony growth
# ---------------------------------------------------------------------------

def sterilized_pairs(spec, int64_t n_samples, seed_words, int64_t budget):
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    out_c = np.empty(n_samples, dtype=np.int64)
    out_m = np.empty(n_samples, dtype=np.int64)
    cdef int64_t[::1] C = out_c
    cdef int64_t[::1] M = out_m

    cdef int64_t i, gen, newgen, j, xi, xm, csum, msum, births, cd
    for i in range(n_samples):
        cd = thin_gap(&r, &m) if m.rule_kind == 1 else 0
        gen = 1
        csum = 0
        msum = 0
        births = 0
        while gen > 0:
            newgen = 0
            for j in range(gen):
                births += 1
                if births > budget:
                    raise StepBudgetExceeded(
                        "sterilized colony exceeded step budget",
                        births=births, replica=i)
                xi = draw_xi(&r, &m)
                xm = draw_migrants(&r, &m, xi, &cd)
                newgen += xi - xm
                msum += xm
            csum += gen
            gen = newgen
        C[i] = csum
        M[i] = msum
    return out_c, out_m


# ---------------------------------------------------------------------------
# walk representation: first passage of the homebody walk
# ---------------------------------------------------------------------------

def passage_level_pairs(spec, int64_t level, int64_t n_samples, seed_words,
                        int64_t budget):
    """(tau_level, S^m at tau_level) for n_samples independent walks."""
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    out_t = np.empty(n_samples, dtype=np.int64)
    out_s = np.empty(n_samples, dtype=np.int64)
    cdef int64_t[::1] T = out_t
    cdef int64_t[::1] S = out_s

    cdef int64_t i, k, depth, sm, xi, xm, cd
    for i in range(n_samples):
        cd = thin_gap(&r, &m) if m.rule_kind == 1 else 0
        k = 0
        depth = 0
        sm = 0
        while depth > -level:
            k += 1
            if k > budget:
                raise StepBudgetExceeded(
                    "passage walk exceeded step budget", births=k, replica=i)
            xi = draw_xi(&r, &m)
            xm = draw_migrants(&r, &m, xi, &cd)
            depth += xi - xm - 1
            sm += xm
        T[i] = k
        S[i] = sm
    return out_t, out_s


def walk_atoms_replica(spec, int64_t a, seed_words, int64_t budget):
    """Atom sequence of Eq.-style walk representation for one replica.

    Returns (atoms list, eta, final S^m).
    """
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    cdef int64_t cd = thin_gap(&r, &m) if m.rule_kind == 1 else 0
    cdef int64_t j = 0, sm = 0, births = 0
    cdef int64_t steps, depth, xi, xm
    atoms = []
    while True:
        steps = 0
        depth = 0
        while depth > -1:
            steps += 1
            births += 1
            if births > budget:
                raise StepBudgetExceeded(
                    "atom walk exceeded step budget", births=births)
            xi = draw_xi(&r, &m)
            xm = draw_migrants(&r, &m, xi, &cd)
            depth += xi - xm - 1
            sm += xm
        atoms.append(steps)
        j += 1
        if j - sm == a:
            break
    return atoms, j, sm


# ---------------------------------------------------------------------------
# direct colony simulation
# ---------------------------------------------------------------------------

def partition_replica(spec, int64_t a, seed_words, int64_t budget):
    """One full partition: (colony sizes list, zeta, gamma, xi_sum, xim_sum)."""
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    cdef int64_t cd = thin_gap(&r, &m) if m.rule_kind == 1 else 0
    cdef int64_t pending = a, births = 0
    cdef int64_t zeta = 0, gamma = 0, xi_sum = 0, xim_sum = 0
    cdef int64_t alive, size, xi, xm
    sizes = []
    while pending > 0:
        alive = 1
        size = 0
        while alive > 0:
            size += 1
            births += 1
            if births > budget:
                raise StepBudgetExceeded(
                    "partition exceeded step budget", births=births)
            xi = draw_xi(&r, &m)
            xm = draw_migrants(&r, &m, xi, &cd)
            xi_sum += xi
            xim_sum += xm
            alive += xi - xm - 1
            pending += xm
        pending -= 1
        gamma += 1
        zeta += size
        sizes.append(size)
    return sizes, zeta, gamma, xi_sum, xim_sum


cdef inline double step_f(const double* breaks, const double* vals,
                          int64_t npieces, double x) nogil:
    cdef int64_t i
    if x < breaks[0] or x >= breaks[npieces]:
        return 0.0
    for i in range(npieces):
        if x < breaks[i + 1]:
            return vals[i]
    return 0.0


def partition_functionals(spec, int64_t a, double scale, f_pack,
                          int64_t n_reps, double stop_threshold,
                          seed_words, int64_t budget):
    """Monte Carlo of sum_j f_k(C_j / scale) over full partitions.

    f_pack: (breaks flat float64, vals flat float64, offsets int64[K+1]);
    each f is a step function, vals[i] on [breaks[i], breaks[i+1]).

    A replica stops early once every per-f partial sum is >= stop_threshold
    (the final exp(-sum) then lies in [0, exp(-stop_threshold)]); pass
    stop_threshold <= 0 to disable.  Returns (fsums[n_reps, K],
    stopped uint8[n_reps], zeta[n_reps], gamma[n_reps], xi_sum[n_reps],
    xim_sum[n_reps]).
    """
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    breaks_a, vals_a, offs_a = f_pack
    cdef double[::1] breaks = breaks_a
    cdef double[::1] vals = vals_a
    cdef int64_t[::1] offs = offs_a
    cdef int64_t K = offs.shape[0] - 1

    out_f = np.zeros((n_reps, K), dtype=np.float64)
    out_stop = np.zeros(n_reps, dtype=np.uint8)
    out_zeta = np.zeros(n_reps, dtype=np.int64)
    out_gamma = np.zeros(n_reps, dtype=np.int64)
    out_xi = np.zeros(n_reps, dtype=np.int64)
    out_xim = np.zeros(n_reps, dtype=np.int64)
    cdef double[:, ::1] FS = out_f
    cdef unsigned char[::1] STOP = out_stop
    cdef int64_t[::1] ZETA = out_zeta
    cdef int64_t[::1] GAMMA = out_gamma
    cdef int64_t[::1] XI = out_xi
    cdef int64_t[::1] XIM = out_xim

    cdef double inv_scale = 1.0 / scale
    cdef int64_t rep, pending, births, alive, size, xi, xm, cd, k, npc
    cdef int64_t zeta, gamma, xi_sum, xim_sum
    cdef double x, fmin

    for rep in range(n_reps):
        cd = thin_gap(&r, &m) if m.rule_kind == 1 else 0
        pending = a
        births = 0
        zeta = 0
        gamma = 0
        xi_sum = 0
        xim_sum = 0
        while pending > 0:
            alive = 1
            size = 0
            while alive > 0:
                size += 1
                births += 1
                if births > budget:
                    raise StepBudgetExceeded(
                        "partition functional exceeded step budget",
                        births=births, replica=rep)
                xi = draw_xi(&r, &m)
                xm = draw_migrants(&r, &m, xi, &cd)
                xi_sum += xi
                xim_sum += xm
                alive += xi - xm - 1
                pending += xm
            pending -= 1
            gamma += 1
            zeta += size
            x = size * inv_scale
            fmin = 1e308
            for k in range(K):
                npc = offs[k + 1] - offs[k] - 1
                FS[rep, k] += step_f(&breaks[offs[k]], &vals[offs[k] - k],
                                     npc, x)
                if FS[rep, k] < fmin:
                    fmin = FS[rep, k]
            if stop_threshold > 0.0 and fmin >= stop_threshold:
                STOP[rep] = 1
                break
        ZETA[rep] = zeta
        GAMMA[rep] = gamma
        XI[rep] = xi_sum
        XIM[rep] = xim_sum
    return out_f, out_stop, out_zeta, out_gamma, out_xi, out_xim


def walk_functionals(spec, int64_t a, double scale, f_pack, int64_t n_reps,
                     double stop_threshold, seed_words, int64_t budget):
    """Same contract as partition_functionals, via the passage-time walk."""
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    breaks_a, vals_a, offs_a = f_pack
    cdef double[::1] breaks = breaks_a
    cdef double[::1] vals = vals_a
    cdef int64_t[::1] offs = offs_a
    cdef int64_t K = offs.shape[0] - 1

    out_f = np.zeros((n_reps, K), dtype=np.float64)
    out_stop = np.zeros(n_reps, dtype=np.uint8)
    out_zeta = np.zeros(n_reps, dtype=np.int64)
    out_gamma = np.zeros(n_reps, dtype=np.int64)
    cdef double[:, ::1] FS = out_f
    cdef unsigned char[::1] STOP = out_stop
    cdef int64_t[::1] ZETA = out_zeta
    cdef int64_t[::1] GAMMA = out_gamma

    cdef double inv_scale = 1.0 / scale
    cdef int64_t rep, births, steps, depth, xi, xm, cd, j, sm, k, npc
    cdef double x, fmin

    for rep in range(n_reps):
        cd = thin_gap(&r, &m) if m.rule_kind == 1 else 0
        births = 0
        j = 0
        sm = 0
        while True:
            steps = 0
            depth = 0
            while depth > -1:
                steps += 1
                births += 1
                if births > budget:
                    raise StepBudgetExceeded(
                        "walk functional exceeded step budget",
                        births=births, replica=rep)
                xi = draw_xi(&r, &m)
                xm = draw_migrants(&r, &m, xi, &cd)
                depth += xi - xm - 1
                sm += xm
            j += 1
            ZETA[rep] += steps
            x = steps * inv_scale
            fmin = 1e308
            for k in range(K):
                npc = offs[k + 1] - offs[k] - 1
                FS[rep, k] += step_f(&breaks[offs[k]], &vals[offs[k] - k],
                                     npc, x)
                if FS[rep, k] < fmin:
                    fmin = FS[rep, k]
            if j - sm == a:
                break
            if stop_threshold > 0.0 and fmin >= stop_threshold:
                STOP[rep] = 1
                break
        GAMMA[rep] = j
    return out_f, out_stop, out_zeta, out_gamma


# ---------------------------------------------------------------------------
# total population of the plain Galton-Watson process
# ---------------------------------------------------------------------------

def total_progeny(spec, int64_t a, int64_t n_reps, int64_t cap, seed_words):
    """First passage of sum(xi - 1) to -a; capped replicas are flagged."""
    cdef Model m
    build_model(&m, spec)
    cdef Rng r
    rng_seed(&r, seed_words)

    out_z = np.empty(n_reps, dtype=np.int64)
    out_c = np.zeros(n_reps, dtype=np.uint8)
    cdef int64_t[::1] Z = out_z
    cdef unsigned char[::1] CAP = out_c

    cdef int64_t i, s, k
    for i in range(n_reps):
        s = a
        k = 0
        while s > 0:
            if k >= cap:
                CAP[i] = 1
                break
            k += 1
            s += draw_xi(&r, &m) - 1
        Z[i] = k
    return out_z, out_c
