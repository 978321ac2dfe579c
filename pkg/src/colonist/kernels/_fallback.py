"""Pure-python (numpy-vectorized) backend for the simulation kernels.

Statistically equivalent to the compiled backend, but draws from numpy's
PCG64 rather than the inline xoshiro generator, so the two backends do not
reproduce each other bit for bit.  Intended for environments without the
built extension and for cross-backend law checks; the compiled core is
roughly an order of magnitude faster on the birth-level loops.
"""

import numpy as np

BACKEND_NAME = "python"

_LAW_GEOMETRIC = 0
_RULE_NONE = 0
_RULE_THINNING = 1
_RULE_ALL_OR_NOTHING = 2
_RULE_CUTOFF = 3


class StepBudgetExceeded(RuntimeError):
    def __init__(self, message, births=None, replica=None):
        super().__init__(message)
        self.births = births
        self.replica = replica


def _rng(seed_words):
    words = [int(w) for w in np.asarray(seed_words, dtype=np.uint64)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def _draw_xi(spec, rng, size):
    if spec.law_kind == _LAW_GEOMETRIC:
        return rng.geometric(0.5, size=size).astype(np.int64) - 1
    u = rng.random(size)
    return np.searchsorted(spec.cdf, u, side="right").astype(np.int64)


def _draw_migrants(spec, rng, xi):
    if spec.rule_kind == _RULE_NONE:
        return np.zeros_like(xi)
    if spec.rule_kind == _RULE_THINNING:
        return rng.binomial(xi, spec.p).astype(np.int64)
    if spec.rule_kind == _RULE_ALL_OR_NOTHING:
        keep = rng.random(xi.shape) < np.exp(-xi * spec.inv_scale)
        return np.where(keep, 0, xi)
    return np.maximum(xi - spec.cutoff, 0)


def _step_f_eval(breaks, vals, offs, x):
    """Evaluate each packed step function at scalar x."""
    out = np.zeros(len(offs) - 1)
    for k in range(len(offs) - 1):
        b = breaks[offs[k]:offs[k + 1]]
        v = vals[offs[k] - k:offs[k + 1] - (k + 1)]
        if b[0] <= x < b[-1]:
            out[k] = v[np.searchsorted(b, x, side="right") - 1]
    return out


def sterilized_pairs(spec, n_samples, seed_words, budget):
    rng = _rng(seed_words)
    alive = np.ones(n_samples, dtype=np.int64)
    C = np.zeros(n_samples, dtype=np.int64)
    M = np.zeros(n_samples, dtype=np.int64)
    births = 0
    while True:
        idx = np.nonzero(alive > 0)[0]
        if idx.size == 0:
            break
        counts = alive[idx]
        tot = int(counts.sum())
        births += tot
        if births > budget:
            raise StepBudgetExceeded(
                "sterilized colonies exceeded step budget", births=births)
        xi = _draw_xi(spec, rng, tot)
        xm = _draw_migrants(spec, rng, xi)
        seg = np.repeat(np.arange(idx.size), counts)
        C[idx] += counts
        M[idx] += np.bincount(seg, weights=xm, minlength=idx.size).astype(np.int64)
        alive[idx] = np.bincount(seg, weights=xi - xm,
                                 minlength=idx.size).astype(np.int64)
    return C, M


def _passage_blocks(spec, rng, level, budget, block=4096):
    """Walk until the homebody walk first hits -level.

    Returns (tau, sm) for a single walk.
    """
    depth = 0
    sm = 0
    tau = 0
    while True:
        xi = _draw_xi(spec, rng, block)
        xm = _draw_migrants(spec, rng, xi)
        cs = depth + np.cumsum(xi - xm - 1)
        hit = np.nonzero(cs <= -level)[0]
        if hit.size:
            j = int(hit[0])
            tau += j + 1
            sm += int(np.cumsum(xm)[j])
            if tau > budget:
                raise StepBudgetExceeded(
                    "passage walk exceeded step budget", births=tau)
            return tau, sm
        tau += block
        sm += int(xm.sum())
        depth = int(cs[-1])
        if tau > budget:
            raise StepBudgetExceeded(
                "passage walk exceeded step budget", births=tau)
        block = min(2 * block, 1 << 22)


def passage_level_pairs(spec, level, n_samples, seed_words, budget):
    rng = _rng(seed_words)
    T = np.empty(n_samples, dtype=np.int64)
    S = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        try:
            T[i], S[i] = _passage_blocks(spec, rng, level, budget)
        except StepBudgetExceeded as e:
            e.replica = i
            raise
    return T, S


def walk_atoms_replica(spec, a, seed_words, budget):
    rng = _rng(seed_words)
    atoms = []
    j = 0
    sm = 0
    births = 0
    while True:
        tau, dsm = _passage_blocks(spec, rng, 1, budget - births)
        births += tau
        sm += dsm
        atoms.append(tau)
        j += 1
        if j - sm == a:
            return atoms, j, sm


def _grow_colony(spec, rng, budget):
    """One colony from a single founder: (size, migrants, xi_sum, births)."""
    alive = 1
    size = 0
    migrants = 0
    xi_sum = 0
    while alive > 0:
        xi = _draw_xi(spec, rng, alive)
        xm = _draw_migrants(spec, rng, xi)
        size += alive
        if size > budget:
            raise StepBudgetExceeded("colony exceeded step budget", births=size)
        migrants += int(xm.sum())
        xi_sum += int(xi.sum())
        alive = int((xi - xm).sum())
    return size, migrants, xi_sum


def partition_replica(spec, a, seed_words, budget):
    rng = _rng(seed_words)
    sizes = []
    pending = a
    zeta = 0
    gamma = 0
    xi_sum = 0
    xim_sum = 0
    while pending > 0:
        size, migrants, xs = _grow_colony(spec, rng, budget - zeta)
        pending += migrants - 1
        zeta += size
        gamma += 1
        xi_sum += xs
        xim_sum += migrants
        sizes.append(size)
    return sizes, zeta, gamma, xi_sum, xim_sum


def partition_functionals(spec, a, scale, f_pack, n_reps, stop_threshold,
                          seed_words, budget):
    rng = _rng(seed_words)
    breaks, vals, offs = f_pack
    K = len(offs) - 1
    FS = np.zeros((n_reps, K))
    STOP = np.zeros(n_reps, dtype=np.uint8)
    ZETA = np.zeros(n_reps, dtype=np.int64)
    GAMMA = np.zeros(n_reps, dtype=np.int64)
    XI = np.zeros(n_reps, dtype=np.int64)
    XIM = np.zeros(n_reps, dtype=np.int64)
    for rep in range(n_reps):
        pending = a
        while pending > 0:
            try:
                size, migrants, xs = _grow_colony(
                    spec, rng, budget - int(ZETA[rep]))
            except StepBudgetExceeded as e:
                e.replica = rep
                raise
            pending += migrants - 1
            ZETA[rep] += size
            GAMMA[rep] += 1
            XI[rep] += xs
            XIM[rep] += migrants
            FS[rep] += _step_f_eval(breaks, vals, offs, size / scale)
            if stop_threshold > 0 and FS[rep].min() >= stop_threshold:
                STOP[rep] = 1
                break
    return FS, STOP, ZETA, GAMMA, XI, XIM


def walk_functionals(spec, a, scale, f_pack, n_reps, stop_threshold,
                     seed_words, budget):
    rng = _rng(seed_words)
    breaks, vals, offs = f_pack
    K = len(offs) - 1
    FS = np.zeros((n_reps, K))
    STOP = np.zeros(n_reps, dtype=np.uint8)
    ZETA = np.zeros(n_reps, dtype=np.int64)
    GAMMA = np.zeros(n_reps, dtype=np.int64)
    for rep in range(n_reps):
        j = 0
        sm = 0
        while True:
            try:
                tau, dsm = _passage_blocks(spec, rng, 1,
                                           budget - int(ZETA[rep]))
            except StepBudgetExceeded as e:
                e.replica = rep
                raise
            j += 1
            sm += dsm
            ZETA[rep] += tau
            FS[rep] += _step_f_eval(breaks, vals, offs, tau / scale)
            if j - sm == a:
                break
            if stop_threshold > 0 and FS[rep].min() >= stop_threshold:
                STOP[rep] = 1
                break
        GAMMA[rep] = j
    return FS, STOP, ZETA, GAMMA


def total_progeny(spec, a, n_reps, cap, seed_words):
    rng = _rng(seed_words)
    Z = np.empty(n_reps, dtype=np.int64)
    CAP = np.zeros(n_reps, dtype=np.uint8)
    for i in range(n_reps):
        s = a
        k = 0
        block = 8192
        while s > 0 and k < cap:
            n = min(block, cap - k)
            xi = _draw_xi(spec, rng, n)
            cs = s + np.cumsum(xi - 1)
            hit = np.nonzero(cs <= 0)[0]
            if hit.size:
                k += int(hit[0]) + 1
                s = 0
                break
            k += n
            s = int(cs[-1])
            block = min(2 * block, 1 << 22)
        if s > 0:
            CAP[i] = 1
        Z[i] = k
    return Z, CAP
