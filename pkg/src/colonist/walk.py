"""Random-walk representation of the colony partition.

Summing (homebody children - 1) along the birth order gives a walk whose
negative steps are exactly -1, so it hits each negative level one unit at
a time.  Its first passage time to -1 has the law of an ancestral colony
size C, the migrant count accumulated by then has the law of M, and the
successive passage-time increments reproduce the whole colony-size
multiset once the stopping rule eta = inf{j : j - migrants(j) = a} is
applied.  Both representations consume the identical (offspring, split)
primitive, so any law mismatch isolates a representation bug.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .colony import DEFAULT_BUDGET, _spec_of
from .seeding import derive_seed_words


@dataclass(frozen=True)
class AtomSequence:
    """Passage-time increments of one stopped walk."""

    atoms: np.ndarray          # increments tau_j - tau_{j-1}
    eta: int                   # number of passage levels used
    final_migrants: int        # migrant count at the last passage time

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.int64)
        object.__setattr__(self, "atoms", atoms)
        if atoms.size != self.eta:
            raise ValueError("atom count must equal eta")


def passage_pair(model, seed, budget=DEFAULT_BUDGET):
    """(first passage time to -1, migrants accumulated by then)."""
    T, S = passage_pairs(model, 1, seed, budget)
    return int(T[0]), int(S[0])


def passage_pairs(model, n_samples, seed, budget=DEFAULT_BUDGET):
    """Arrays of n_samples independent passage pairs at level 1."""
    spec = _spec_of(model)
    words = derive_seed_words(seed, "passage")
    return kernels.passage_level_pairs(spec, 1, n_samples, words, budget)


def atoms_via_walk(model, a, seed, budget=DEFAULT_BUDGET):
    """Colony-size multiset generated through the walk representation."""
    if a < 1:
        raise ValueError("a must be >= 1")
    spec = _spec_of(model)
    words = derive_seed_words(seed, "atoms")
    atoms, eta, sm = kernels.walk_atoms_replica(spec, a, words, budget)
    return AtomSequence(atoms=np.asarray(atoms, dtype=np.int64),
                        eta=eta, final_migrants=sm)


def passage_process_sample(model, x, seed, budget=DEFAULT_BUDGET):
    """One rescaled sample (tau_[nx]/alpha(n), migrants/n) of the bivariate
    passage walk of a concrete model at level [n*x]."""
    T, S = passage_process_samples(model, x, 1, seed, budget)
    return float(T[0]), float(S[0])


def passage_process_samples(model, x, n_samples, seed,
                            budget=DEFAULT_BUDGET):
    """Arrays of rescaled passage samples; ``model`` must be a concrete
    family member (it supplies n and alpha(n))."""
    if x <= 0:
        raise ValueError("x must be positive")
    level = max(1, int(model.n * x))
    words = derive_seed_words(seed, "passage-process")
    T, S = kernels.passage_level_pairs(model.spec, level, n_samples, words,
                                       budget)
    return T / model.alpha, S / model.n


def walk_laplace_functional_estimate(model, a, f, n_replicas, seed,
                                     scale=1.0, budget=DEFAULT_BUDGET,
                                     stop_threshold=None):
    """Same contract as colony.laplace_functional_estimate, but the
    colony-size multiset is generated through the walk representation."""
    if n_replicas < 2:
        raise ValueError("need at least 2 replicas")
    spec = _spec_of(model)
    f_pack = kernels.pack_step_functions([f.pack()])
    words = derive_seed_words(seed, "laplace-walk")
    thr = -1.0 if stop_threshold is None else float(stop_threshold)
    fsums, stopped, zeta, gamma = kernels.walk_functionals(
        spec, a, scale, f_pack, n_replicas, thr, words, budget)
    vals = np.exp(-fsums[:, 0])
    est = float(vals.mean())
    stderr = float(vals.std(ddof=1)) / math.sqrt(n_replicas)
    frac = float(np.mean(stopped != 0))
    bias = frac * math.exp(-thr) if stop_threshold is not None else 0.0
    info = {"stopped_fraction": frac, "bias_bound": bias,
            "mean_zeta": float(np.mean(zeta))}
    return est, stderr, info


def pairs_to_csv(pairs, path):
    """Passage pairs as CSV rows (replica_id, tau1, migrants)."""
    T, S = pairs
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica_id", "tau1", "migrants"])
        for rid, (t, s) in enumerate(zip(T, S)):
            w.writerow([rid, int(t), int(s)])


def atoms_to_csv(sequences, path):
    """Atom dumps as CSV rows (replica_id, atom_index, atom)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica_id", "atom_index", "atom"])
        for rid, seq in enumerate(sequences):
            for j, atom in enumerate(seq.atoms):
                w.writerow([rid, j, int(atom)])
