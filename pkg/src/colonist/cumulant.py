"""Cumulant equations for colony partitions and their scaling limits.

The law of the colony-size point measure is characterized by a convex
fixed-point equation: for a test function f, the cumulant K(f) is the
unique root of

    exp(-lam) = E exp(-f(C) - lam * M)

over sterilized-colony pairs (C, M), and its continuum analogue kappa(f)
solves

    lam = Integral (1 - exp(-f(x1) - lam * x2)) Lambda(dx1 dx2)

for a bivariate jump-intensity measure Lambda.  Both equations have convex,
eventually-increasing defect functions, so a bracketed bisection/Newton
hybrid finds the root reliably.  This module also inverts bivariate
Laplace exponents and provides the closed-form/axes special cases.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

ROOT_TOL = 1e-12
MAX_ITER = 200


class DegenerateSamplesError(ValueError):
    """The empirical cumulant equation has no root for these samples."""


class ConvergenceError(RuntimeError):
    """Root finding failed to reach tolerance within the iteration cap."""


@dataclass(frozen=True)
class TestFunction:
    """Nonnegative step function with compact support inside (0, inf).

    ``values[i]`` applies on [breakpoints[i], breakpoints[i+1]); the
    function vanishes outside [breakpoints[0], breakpoints[-1]).
    """

    __test__ = False        # keep pytest from collecting this as a test

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if bp.ndim != 1 or v.ndim != 1 or bp.size != v.size + 1:
            raise ValueError("need one more breakpoint than value")
        if bp[0] <= 0.0:
            raise ValueError("support must start strictly above 0")
        if (np.diff(bp) <= 0).any():
            raise ValueError("breakpoints must be strictly increasing")
        if (v < 0).any() or not np.isfinite(v).all():
            raise ValueError("values must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    @staticmethod
    def indicator(lo, hi, height=1.0):
        """height * 1[lo, hi)."""
        return TestFunction(np.array([lo, hi]), np.array([height]))

    @property
    def support(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def max_value(self):
        return float(self.values.max()) if self.values.size else 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.zeros(x.shape)
        out[inside] = self.values[idx[inside]]
        if x.ndim == 0:
            return float(out)
        return out

    def pack(self):
        """(breakpoints, values) pair for the kernel packers."""
        return self.breakpoints, self.values


@dataclass(frozen=True)
class CumulantResult:
    """Root of a cumulant equation with solver diagnostics attached."""

    value: float
    residual: float
    bracket: Tuple[float, float]
    iterations: int
    stderr_propagated: float = 0.0

    def to_json(self):
        return json.dumps({
            "value": self.value,
            "residual": self.residual,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "stderr": self.stderr_propagated,
        })


def convex_root(F, dF, hi0=1.0, lo=0.0, tol=ROOT_TOL, max_iter=MAX_ITER):
    """Root of a convex F with F(lo) <= 0, by bracketing then
    bisection/Newton.  Returns (root, residual, (lo, hi), iterations).

    Raises DegenerateSamplesError if no sign change is found while doubling
    the upper bracket, and ConvergenceError if the iteration cap is hit.
    """
    f_lo = F(lo)
    if f_lo > tol:
        raise ValueError("F(lo) must be <= 0 for a bracketed convex root")
    if abs(f_lo) <= tol:
        return lo, f_lo, (lo, lo), 0
    hi = max(hi0, lo + 1.0)
    iters = 0
    while F(hi) <= 0.0:
        hi = 2.0 * hi + 1.0
        iters += 1
        if iters > 80:
            raise DegenerateSamplesError(
                "no sign change: the cumulant equation has no finite root")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        iters += 1
        fx = F(x)
        if abs(fx) <= tol:
            return x, fx, (lo, hi), iters
        if fx > 0.0:
            hi = x
        else:
            lo = x
        step_ok = False
        if dF is not None:
            d = dF(x)
            if d > 0.0 and math.isfinite(d):
                xn = x - fx / d
                if lo < xn < hi:
                    x = xn
                    step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
        if hi - lo <= tol * (1.0 + abs(x)):
            fx = F(x)
            return x, fx, (lo, hi), iters
    raise ConvergenceError("root finder hit the iteration cap")


def solve_K_empirical(samples, f, scale=1.0):
    """Cumulant root from empirical (colony size, migrant count) pairs.

    ``samples`` is a pair of arrays (C, M) or a sequence of (C, M) tuples;
    ``f`` is applied to C / scale.  Solves G(lam) = 0 for
    G(lam) = lam + ln mean(exp(-f(C/scale) - lam*M)), with a delta-method
    standard error propagated from the Monte Carlo sample.
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        C, M = samples
    else:
        arr = np.asarray(samples)
        C, M = arr[:, 0], arr[:, 1]
    C = np.asarray(C, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    n = C.size
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    if f.max_value == 0.0:
        # the zero function has cumulant 0 identically
        return CumulantResult(0.0, 0.0, (0.0, 0.0), 0, 0.0)
    fC = f(C / scale)

    def weights(lam):
        return np.exp(-fC - lam * M)

    def G(lam):
        return lam + math.log(float(np.mean(weights(lam))))

    def dG(lam):
        w = weights(lam)
        return 1.0 - float(np.mean(M * w) / np.mean(w))

    if np.all(fC <= 0.0):
        # f vanishes on every sample: lam = 0 is the unique root when the
        # mean migrant output is below one; at or above one the positive
        # bracket never changes sign, so the input is degenerate.
        if float(np.mean(M)) < 1.0:
            return CumulantResult(0.0, G(0.0), (0.0, 0.0), 0, 0.0)
        raise DegenerateSamplesError(
            "f vanishes on all samples and mean migrant count is >= 1")
    if not np.any(M == 0.0):
        # G(lam) stays <= 0 for all lam when every sample migrates:
        # lam + ln E exp(-lam M) <= -min f < 0.
        raise DegenerateSamplesError(
            "every sample has migrants: the equation has no finite root")
    root, res, bracket, iters = convex_root(G, dG, hi0=1.0 + f.max_value)
    w = weights(root)
    mw = float(np.mean(w))
    se_logmean = float(np.std(w, ddof=1)) / (math.sqrt(n) * mw)
    slope = dG(root)
    stderr = se_logmean / max(abs(slope), 1e-300)
    return CumulantResult(root, res, bracket, iters, stderr)


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    limit: int = 200


def solve_kappa(measure, f, quad: Optional[QuadratureSpec] = None):
    """Continuum cumulant: the root of
    lam = Integral (1 - exp(-f(x1) - lam*x2)) measure(dx1 dx2).

    ``measure`` must implement ``laplace_moments(f, lam)`` returning the
    integral above and its lam-derivative Integral x2*exp(...)*measure,
    and ``x2_mean()`` for the mass precondition Integral x2 <= 1.
    """
    quad = quad or QuadratureSpec()
    x2m = measure.x2_mean()
    if x2m > 1.0 + 1e-9:
        raise ValueError(
            f"measure violates the mass condition: integral x2 = {x2m:.6g} > 1")

    def F(lam):
        integral, _ = measure.laplace_moments(f, lam, quad)
        return lam - integral

    def dF(lam):
        _, deriv = measure.laplace_moments(f, lam, quad)
        return 1.0 - deriv

    hi0, _ = measure.laplace_moments(f, 0.0, quad)
    root, res, bracket, iters = convex_root(F, dF, hi0=max(hi0, 1.0))
    return CumulantResult(root, res, bracket, iters, 0.0)


# ---------------------------------------------------------------------------
# Bivariate Laplace exponents and their inversion
# ---------------------------------------------------------------------------

class LaplaceExponent:
    """Bivariate exponent Psi(q, r), convex and increasing in q with
    Psi(0, r) <= 0, so Psi(., r) = q has a unique nonnegative root."""

    def value(self, q, r):
        raise NotImplementedError


@dataclass(frozen=True)
class StablePlusDrift(LaplaceExponent):
    """Psi(q, r) = b*q**beta + c*q - c*r."""

    b: float
    beta: float
    c: float

    def value(self, q, r):
        return self.b * q ** self.beta + self.c * q - self.c * r


@dataclass(frozen=True)
class OneType(LaplaceExponent):
    """Psi(q, r) = b*((q+1)**beta - 1) + b*(r**beta + 1 - (r+1)**beta)."""

    b: float
    beta: float

    def value(self, q, r):
        return (self.b * ((q + 1.0) ** self.beta - 1.0)
                + self.b * (r ** self.beta + 1.0 - (r + 1.0) ** self.beta))


@dataclass(frozen=True)
class Tabulated(LaplaceExponent):
    """Wraps an arbitrary callable (q, r) -> Psi(q, r)."""

    fn: object

    def value(self, q, r):
        return self.fn(q, r)


def invert_psi(psi, q, r):
    """The unique z >= 0 with psi.value(z, r) == q, to 1e-12 relative."""
    if q < 0 or r < 0:
        raise ValueError("q and r must be nonnegative")

    def F(z):
        return psi.value(z, r) - q

    if F(0.0) > 0.0:
        raise ValueError("exponent violates Psi(0, r) <= 0")
    root, _, _, _ = convex_root(F, None, hi0=1.0 + q,
                                tol=ROOT_TOL * (1.0 + q))
    return root


def phi_neutral(b, beta, c, q):
    """The nonnegative root z of b*z**beta + c*z = q."""
    if b <= 0 or c < 0 or not (1.0 < beta <= 2.0):
        raise ValueError("need b > 0, c >= 0, beta in (1, 2]")
    if q < 0:
        raise ValueError("q must be nonnegative")
    if q == 0.0:
        return 0.0
    if beta == 2.0:
        return (-c + math.sqrt(c * c + 4.0 * b * q)) / (2.0 * b)
    root, _, _, _ = convex_root(
        lambda z: b * z ** beta + c * z - q, None,
        hi0=(q / b) ** (1.0 / beta) + (q / c if c > 0 else 0.0),
        tol=ROOT_TOL * (1.0 + q))
    return root


def kappa_axes(measure1, measure2, f, quad: Optional[QuadratureSpec] = None):
    """Cumulant for a jump measure supported on the two coordinate axes.

    With Lambda = measure1 (x) delta_0 + delta_0 (x) measure2, the cumulant
    factorizes: kappa(f) = phi(q_in) where q_in = Integral (1-e^{-f}) d
    measure1 and phi solves q = phi - Integral (1 - e^{-phi*x2}) measure2.
    """
    quad = quad or QuadratureSpec()
    q_in = measure1.integrate(lambda x: -np.expm1(-f(x)), quad)
    if q_in == 0.0:
        return 0.0
    x2m = measure2.integrate(lambda x: x, quad)
    if x2m > 1.0 + 1e-9:
        raise ValueError(
            f"axes measure violates the mass condition: {x2m:.6g} > 1")

    def F(phi):
        return (phi - measure2.integrate(
            lambda x: -np.expm1(-phi * x), quad) - q_in)

    def dF(phi):
        return 1.0 - measure2.integrate(
            lambda x: x * np.exp(-phi * x), quad)

    root, _, _, _ = convex_root(F, dF, hi0=q_in + 1.0)
    return root
