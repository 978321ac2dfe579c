"""Simulation kernels: compiled core with a pure-python fallback.

The compiled backend (``colonist.kernels._core``, Cython) is used when the
extension built; otherwise the numpy fallback is selected.  Set
``COLONIST_BACKEND=python`` or ``COLONIST_BACKEND=compiled`` to force one.

Both backends expose the same functions:

    sterilized_pairs(spec, n, seed_words, budget) -> (C, M)
    passage_level_pairs(spec, level, n, seed_words, budget) -> (tau, sm)
    walk_atoms_replica(spec, a, seed_words, budget) -> (atoms, eta, sm)
    partition_replica(spec, a, seed_words, budget)
        -> (sizes, zeta, gamma, xi_sum, xim_sum)
    partition_functionals(spec, a, scale, f_pack, n_reps, stop, seed, budget)
    walk_functionals(spec, a, scale, f_pack, n_reps, stop, seed, budget)
    total_progeny(spec, a, n_reps, cap, seed_words) -> (zeta, capped)

``seed_words`` is a length-4 uint64 array (from SeedSequence.generate_state).
"""

import os
from dataclasses import dataclass, field

import numpy as np

LAW_GEOMETRIC = 0
LAW_TABLE = 1

RULE_NONE = 0
RULE_THINNING = 1
RULE_ALL_OR_NOTHING = 2
RULE_CUTOFF = 3

_EMPTY = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class ModelSpec:
    """Flat, kernel-ready encoding of (offspring law, migration rule)."""

    law_kind: int
    cdf: np.ndarray = field(default_factory=lambda: _EMPTY)
    rule_kind: int = RULE_NONE
    p: float = 0.0
    inv_scale: float = 0.0
    cutoff: int = 0
    aon_keep: np.ndarray = field(default_factory=lambda: _EMPTY)


def pack_step_functions(fns):
    """Pack step functions into (breaks flat, vals flat, offsets) arrays.

    ``fns`` is a sequence of (breakpoints, values) pairs with
    len(breakpoints) == len(values) + 1.
    """
    breaks = []
    vals = []
    offs = [0]
    for bp, v in fns:
        bp = np.asarray(bp, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if bp.shape[0] != v.shape[0] + 1:
            raise ValueError("step function needs one more breakpoint than value")
        breaks.append(bp)
        vals.append(v)
        offs.append(offs[-1] + bp.shape[0])
    return (np.concatenate(breaks), np.concatenate(vals),
            np.asarray(offs, dtype=np.int64))


def _select_backend():
    forced = os.environ.get("COLONIST_BACKEND", "").strip().lower()
    if forced == "python":
        from . import _fallback
        return _fallback
    try:
        from . import _core
        return _core
    except ImportError:
        if forced == "compiled":
            raise
        from . import _fallback
        return _fallback


_impl = _select_backend()

BACKEND = _impl.BACKEND_NAME
StepBudgetExceeded = _impl.StepBudgetExceeded
sterilized_pairs = _impl.sterilized_pairs
passage_level_pairs = _impl.passage_level_pairs
walk_atoms_replica = _impl.walk_atoms_replica
partition_replica = _impl.partition_replica
partition_functionals = _impl.partition_functionals
walk_functionals = _impl.walk_functionals
total_progeny = _impl.total_progeny


def get_backend(name):
    """Return a specific backend module ('compiled' or 'python')."""
    if name == "python":
        from . import _fallback
        return _fallback
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
