"""Direct simulation of the branching population and its colony partition.

Each of ``a`` ancestors founds a colony.  Within a colony, homebody
children stay and reproduce; each migrant child founds a new colony, which
is processed from a FIFO queue.  The partition records the multiset of
colony sizes together with conservation totals: the population equals
``a + sum(xi)`` and the colony count equals ``a + sum(migrants)`` exactly.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .seeding import derive_seed_words

DEFAULT_BUDGET = 10**9


def _spec_of(model):
    return model.spec if hasattr(model, "spec") else model


@dataclass(frozen=True)
class ColonyPartition:
    """Colony-size multiset of one extinct population."""

    colony_sizes: np.ndarray
    zeta: int                  # total population
    gamma: int                 # number of colonies
    a: int                     # ancestors
    xi_total: int              # total children born
    migrant_total: int         # total migrant children

    def __post_init__(self):
        sizes = np.asarray(self.colony_sizes, dtype=np.int64)
        object.__setattr__(self, "colony_sizes", sizes)
        if sizes.size != self.gamma or int(sizes.sum()) != self.zeta:
            raise ValueError("colony sizes inconsistent with totals")
        if self.gamma < self.a or self.zeta < self.a:
            raise ValueError("fewer colonies or individuals than ancestors")


@dataclass(frozen=True)
class SterilizedOutcome:
    """Size of one ancestral colony and its migrant output, when migrants
    beget nothing."""

    C: int
    M: int

    def __post_init__(self):
        if self.C < 1:
            raise ValueError("colony size must be at least 1")


def simulate_partition(model, a, seed, budget=DEFAULT_BUDGET):
    """One full colony partition started from ``a`` ancestors."""
    if a < 1:
        raise ValueError("a must be >= 1")
    spec = _spec_of(model)
    words = derive_seed_words(seed, "partition")
    sizes, zeta, gamma, xi_sum, xim_sum = kernels.partition_replica(
        spec, a, words, budget)
    return ColonyPartition(colony_sizes=np.asarray(sizes, dtype=np.int64),
                           zeta=zeta, gamma=gamma, a=a,
                           xi_total=xi_sum, migrant_total=xim_sum)


def simulate_sterilized(model, seed, budget=DEFAULT_BUDGET):
    """(C, M) for a single ancestral colony with sterilized migrants."""
    C, M = sterilized_sample(model, 1, seed, budget)
    return SterilizedOutcome(C=int(C[0]), M=int(M[0]))


def sterilized_sample(model, n_samples, seed, budget=DEFAULT_BUDGET):
    """Arrays of n_samples independent (C, M) pairs."""
    spec = _spec_of(model)
    words = derive_seed_words(seed, "sterilized")
    return kernels.sterilized_pairs(spec, n_samples, words, budget)


def laplace_functional_estimate(model, a, f, n_replicas, seed, scale=1.0,
                                budget=DEFAULT_BUDGET, stop_threshold=None):
    """Monte Carlo estimate of E exp(-sum_j f(C_j / scale)) over partitions
    with ``a`` ancestors.

    Returns (estimate, stderr, info).  When ``stop_threshold`` is set,
    replicas whose running f-sum already exceeds it are abandoned: their
    true contribution is below exp(-stop_threshold), and info["bias_bound"]
    carries stopped_fraction * exp(-stop_threshold).
    """
    if n_replicas < 2:
        raise ValueError("need at least 2 replicas")
    spec = _spec_of(model)
    f_pack = kernels.pack_step_functions([f.pack()])
    words = derive_seed_words(seed, "laplace-colony")
    thr = -1.0 if stop_threshold is None else float(stop_threshold)
    fsums, stopped, zeta, gamma, xi, xim = kernels.partition_functionals(
        spec, a, scale, f_pack, n_replicas, thr, words, budget)
    vals = np.exp(-fsums[:, 0])
    est = float(vals.mean())
    stderr = float(vals.std(ddof=1)) / math.sqrt(n_replicas)
    frac = float(np.mean(stopped != 0))
    bias = frac * math.exp(-thr) if stop_threshold is not None else 0.0
    info = {"stopped_fraction": frac, "bias_bound": bias,
            "mean_zeta": float(np.mean(zeta)), "mean_gamma": float(np.mean(gamma))}
    return est, stderr, info


def partitions_to_csv(partitions, path):
    """One row per colony: (replica_id, colony_size), RFC-4180 quoting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica_id", "colony_size"])
        for rid, part in enumerate(partitions):
            for size in part.colony_sizes:
                w.writerow([rid, int(size)])


def partitions_to_jsonl(partitions, path):
    """One summary object per replica: {replica_id, zeta, gamma}."""
    with open(path, "w") as fh:
        for rid, part in enumerate(partitions):
            fh.write(json.dumps({"replica_id": rid, "zeta": int(part.zeta),
                                 "gamma": int(part.gamma)}) + "\n")
