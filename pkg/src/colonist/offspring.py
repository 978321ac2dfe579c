"""Reproduction laws, migration rules, and scale-indexed model families.

An offspring law gives the number of children per individual.  A migration
rule splits each brood of size ``xi`` into homebodies (stay at the parent's
site) and migrants (found new colonies), with ``xi_h + xi_m = xi`` always.
A model family indexes migration rules and scaling sequences by ``n`` so
that rescaled colony statistics converge as ``n`` grows: the population
scale ``alpha(n)`` satisfies ``alpha(n)/n -> infinity`` and the ancestor
count ``a_seq(n) ~ a*n``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import (
    LAW_GEOMETRIC,
    LAW_TABLE,
    RULE_ALL_OR_NOTHING,
    RULE_CUTOFF,
    RULE_NONE,
    RULE_THINNING,
    ModelSpec,
)

PROB_TOL = 1e-12
STABLE_TABLE_CAP = 10**7
_AON_TABLE_LEN = 4096


def _stable_probs(beta, cap):
    """Probabilities p_k of the law with generating function
    g(s) = s + (1-s)**beta / beta, for k = 0..cap.

    p_0 = 1/beta, p_1 = 0, p_2 = (beta-1)/2, and
    p_{k+1} = p_k * (k - beta) / (k + 1) for k >= 2.
    """
    p = np.zeros(cap + 1)
    p[0] = 1.0 / beta
    if cap >= 2:
        p[2] = (beta - 1.0) / 2.0
        if cap >= 3:
            k = np.arange(2, cap, dtype=np.float64)
            ratios = (k - beta) / (k + 1.0)
            p[3:] = p[2] * np.cumprod(ratios)
    return p


@dataclass(frozen=True)
class OffspringLaw:
    """A validated child-count law with its heavy-tail parameters.

    ``beta`` is the stability index in (1, 2] and ``b`` the coefficient in
    the limiting branching exponent ``b * q**beta``; together they fix the
    scaling sequences of :class:`ModelFamily`.  ``tail_mass`` records the
    probability truncated away when an infinite-support law is tabulated.
    """

    kind: str                      # "geometric" | "stable" | "custom"
    mean: float
    variance: float                # math.inf allowed
    beta: float
    b: float
    probs: Optional[np.ndarray] = field(default=None, repr=False)
    cdf: Optional[np.ndarray] = field(default=None, repr=False)
    tail_mass: float = 0.0

    @staticmethod
    def geometric():
        """P(xi = k) = 2**-(k+1): mean 1, variance 2, beta=2, b=1."""
        return OffspringLaw(kind="geometric", mean=1.0, variance=2.0,
                            beta=2.0, b=1.0)

    @staticmethod
    def stable_pgf(beta, cap=STABLE_TABLE_CAP):
        """Critical heavy-tailed law with generating function
        g(s) = s + (1-s)**beta / beta, tabulated up to ``cap`` and
        renormalized; the discarded tail mass is recorded.
        """
        if not (1.0 < beta <= 2.0):
            raise ValueError("beta must lie in (1, 2]")
        probs = _stable_probs(beta, cap)
        total = probs.sum()
        tail = max(0.0, 1.0 - total)
        probs = probs / total
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        mean = float(np.arange(cap + 1) @ probs)
        if beta == 2.0:
            variance = 1.0
        else:
            variance = math.inf
        return OffspringLaw(kind="stable", mean=mean, variance=variance,
                            beta=beta, b=1.0, probs=probs, cdf=cdf,
                            tail_mass=tail)

    @staticmethod
    def custom(probs):
        """Law from an explicit finite probability list (index = count)."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a nonempty 1-d sequence")
        if (probs < 0).any():
            raise ValueError("probabilities must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        ks = np.arange(probs.size, dtype=np.float64)
        mean = float(ks @ probs)
        if mean > 1.0 + PROB_TOL:
            raise ValueError("supercritical law (mean > 1) rejected")
        if probs.size >= 2 and probs[1] >= 1.0 - PROB_TOL:
            raise ValueError("degenerate law xi == 1 rejected")
        variance = float((ks - mean) ** 2 @ probs)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return OffspringLaw(kind="custom", mean=mean, variance=variance,
                            beta=2.0, b=variance / 2.0, probs=probs, cdf=cdf)

    def quantile(self, u):
        """Smallest k with CDF(k) >= u, for u in [0, 1)."""
        if self.kind == "geometric":
            k = 0
            acc = 0.5
            cdf = 0.5
            while cdf < u:
                k += 1
                acc *= 0.5
                cdf += acc
            return k
        return int(np.searchsorted(self.cdf, u, side="left"))


@dataclass(frozen=True)
class MigrationRule:
    """How a brood of xi children splits into (homebodies, migrants)."""

    kind: str                      # "thinning" | "all_or_nothing" | "cutoff"
    p: float = 0.0                 # thinning: each child migrates w.p. p
    n: int = 0                     # all_or_nothing / cutoff scale index

    @staticmethod
    def thinning(p):
        if not (0.0 <= p <= 1.0):
            raise ValueError("thinning probability must be in [0, 1]")
        return MigrationRule(kind="thinning", p=float(p))

    @staticmethod
    def all_or_nothing(n):
        """All xi children stay with probability exp(-xi/n), else all go."""
        if n < 1:
            raise ValueError("scale index n must be >= 1")
        return MigrationRule(kind="all_or_nothing", n=int(n))

    @staticmethod
    def cutoff(n):
        """The first n children stay; any excess migrates."""
        if n < 1:
            raise ValueError("cutoff threshold n must be >= 1")
        return MigrationRule(kind="cutoff", n=int(n))


def sample_offspring(law, rng):
    """One draw from the offspring law via inverse-CDF on a uniform."""
    return law.quantile(rng.random())


def split_offspring(rule, xi, rng):
    """Split a brood of ``xi`` children into (homebodies, migrants)."""
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    if xi == 0:
        return 0, 0
    if rule.kind == "thinning":
        xm = int(rng.binomial(xi, rule.p))
    elif rule.kind == "all_or_nothing":
        xm = 0 if rng.random() < math.exp(-xi / rule.n) else xi
    elif rule.kind == "cutoff":
        xm = max(xi - rule.n, 0)
    else:
        raise ValueError(f"unknown rule kind {rule.kind!r}")
    return xi - xm, xm


@dataclass(frozen=True)
class ConcreteModel:
    """One member of a model family: law + rule + its scales."""

    law: OffspringLaw
    rule: MigrationRule
    alpha: int                     # population/time scale at this index
    a_n: int                       # number of founding ancestors
    n: int

    @property
    def spec(self):
        """Kernel-ready flat encoding of (law, rule)."""
        return model_spec(self.law, self.rule)


def model_spec(law, rule):
    """Convert (law, rule) into the flat encoding the kernels consume."""
    empty = np.empty(0, dtype=np.float64)
    if law.kind == "geometric":
        law_kind, cdf = LAW_GEOMETRIC, empty
    else:
        law_kind, cdf = LAW_TABLE, np.ascontiguousarray(law.cdf)
    if rule.kind == "thinning":
        if rule.p == 0.0:
            return ModelSpec(law_kind=law_kind, cdf=cdf, rule_kind=RULE_NONE)
        return ModelSpec(law_kind=law_kind, cdf=cdf,
                         rule_kind=RULE_THINNING, p=rule.p)
    if rule.kind == "all_or_nothing":
        keep = np.exp(-np.arange(_AON_TABLE_LEN, dtype=np.float64) / rule.n)
        return ModelSpec(law_kind=law_kind, cdf=cdf,
                         rule_kind=RULE_ALL_OR_NOTHING,
                         inv_scale=1.0 / rule.n, aon_keep=keep)
    if rule.kind == "cutoff":
        return ModelSpec(law_kind=law_kind, cdf=cdf,
                         rule_kind=RULE_CUTOFF, cutoff=rule.n)
    raise ValueError(f"unknown rule kind {rule.kind!r}")


@dataclass(frozen=True)
class ModelFamily:
    """An n-indexed family of models sharing one offspring law.

    ``alpha(n)`` grows faster than n (n**2 for the geometric law,
    ceil(beta * n**beta) for the heavy-tailed one), and the per-child
    migration probability of the thinning rule is c*n/alpha(n), so migrant
    counts per rescaled unit of population stay of order one.
    """

    law: OffspringLaw
    rule_kind: str                 # "thinning" | "all_or_nothing" | "cutoff"
    a: float                       # limiting ancestor mass (a_seq(n) ~ a*n)
    c: float = 1.0                 # thinning intensity

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("ancestor mass a must be positive")
        if self.rule_kind not in ("thinning", "all_or_nothing", "cutoff"):
            raise ValueError(f"unknown rule kind {self.rule_kind!r}")
        if self.rule_kind == "thinning" and self.c <= 0:
            raise ValueError("thinning intensity c must be positive")

    def alpha(self, n):
        if n < 1:
            raise ValueError("index n must be >= 1")
        if self.law.kind == "stable":
            return math.ceil(self.law.beta * n ** self.law.beta)
        return n * n

    def a_seq(self, n):
        if n < 1:
            raise ValueError("index n must be >= 1")
        return math.ceil(self.a * n)

    def rule_at(self, n):
        if n < 1:
            raise ValueError("index n must be >= 1")
        if self.rule_kind == "thinning":
            return MigrationRule.thinning(min(1.0, self.c * n / self.alpha(n)))
        if self.rule_kind == "all_or_nothing":
            return MigrationRule.all_or_nothing(n)
        return MigrationRule.cutoff(n)

    def model_at(self, n):
        if n < 1:
            raise ValueError("index n must be >= 1")
        return ConcreteModel(law=self.law, rule=self.rule_at(n),
                             alpha=self.alpha(n), a_n=self.a_seq(n), n=n)
