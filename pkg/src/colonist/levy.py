"""Continuum limit objects: stable densities, bivariate jump-intensity
measures, and the Poisson construction of the limiting colony measure.

The rescaled colony partition converges to a point measure built from a
Poisson random measure N with intensity dt (x) Lambda, where Lambda is a
bivariate measure on (0,inf)^2: the first coordinate is a limiting colony
size and the second the migrant mass it emits.  With Y_t the running sum
of second coordinates, the horizon sigma_y = inf{t : t - Y_t = y} truncates
N; the first coordinates of the atoms before sigma_y form the limit
measure.  Because t - Y_t rises at unit slope between jumps, sigma_y is
located exactly inside the first inter-jump gap that reaches y: the only
approximation anywhere is the truncation of small jumps at eps.
"""

import math
import time
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from .cumulant import QuadratureSpec
from .reporting import StatTestResult
from .seeding import generator

_DEFAULT_QUAD = QuadratureSpec()


# ---------------------------------------------------------------------------
# Stable densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StableParams:
    """Spectrally positive stable motion with E exp(-q X_t) = exp(t b q**beta)."""

    beta: float
    b: float

    def __post_init__(self):
        if not (1.0 < self.beta <= 2.0):
            raise ValueError("beta must lie in (1, 2]")
        if self.b <= 0:
            raise ValueError("b must be positive")


def stable_density(params, x):
    """Density of X_1 at x.

    beta = 2 is the centered Gaussian with variance 2b; for beta < 2 the
    density comes from numerical Fourier inversion of the characteristic
    function exp(b * |u|**beta * (cos(pi*beta/2) - i*sign(u)*sin(pi*beta/2))).
    """
    beta, b = params.beta, params.b
    if beta == 2.0:
        return math.exp(-x * x / (4.0 * b)) / (2.0 * math.sqrt(math.pi * b))
    cos_t = math.cos(0.5 * math.pi * beta)
    sin_t = math.sin(0.5 * math.pi * beta)

    def integrand(u):
        ub = b * u ** beta
        return math.exp(ub * cos_t) * math.cos(u * x + ub * sin_t)

    # |integrand| <= exp(-b|cos| u^beta): pick a cutoff where it is ~1e-300
    u_max = (690.0 / (b * abs(cos_t))) ** (1.0 / beta)
    val, err = integrate.quad(integrand, 0.0, u_max, limit=400,
                              epsabs=1e-10, epsrel=1e-10)
    if err > 1e-6:
        raise ArithmeticError(f"density inversion error estimate {err:.2g}")
    return val / math.pi


def stable_density_at_zero(params):
    """Closed form for the density of X_1 at the origin:
    b**(-1/beta) / (beta * Gamma(1 - 1/beta))."""
    inv = 1.0 / params.beta
    return params.b ** (-inv) / (params.beta * special.gamma(1.0 - inv))


def stable_jump_intensity_constant(beta, b):
    """Constant k in the jump intensity k * x**(-1-beta) dx of the stable
    motion, chosen so that Integral (exp(-qx)-1+qx) k x^(-1-beta) dx =
    b*q**beta.  Only meaningful for beta < 2 (no jumps at beta = 2)."""
    if not (1.0 < beta < 2.0):
        raise ValueError("jump intensity exists only for beta in (1, 2)")
    return b * beta * (beta - 1.0) / special.gamma(2.0 - beta)


def neutral_levy_marginal(beta, b, c, t):
    """First-coordinate intensity density of the neutral-mutation family:
    t**(-1-1/beta) * rho(c * t**(1-1/beta)) with rho the stable density.
    For beta = 2 this is the inverse-Gaussian form
    (1/(2*sqrt(pi*t**3*b))) * exp(-c*c*t/(4*b))."""
    if t <= 0:
        raise ValueError("t must be positive")
    if beta == 2.0:
        return (math.exp(-c * c * t / (4.0 * b))
                / (2.0 * math.sqrt(math.pi * t ** 3 * b)))
    rho = stable_density(StableParams(beta, b), c * t ** (1.0 - 1.0 / beta))
    return t ** (-1.0 - 1.0 / beta) * rho


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------

def _quad_pieces(fn, points, quad, lower=0.0):
    """Integrate fn over (lower, inf), splitting at the sorted interior
    ``points`` (discontinuity locations)."""
    pts = sorted(p for p in np.atleast_1d(points) if p > lower)
    edges = [lower] + pts
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(fn, a, b, limit=quad.limit,
                              epsabs=quad.abs_tol, epsrel=quad.rel_tol)
        total += v
    v, _ = integrate.quad(fn, edges[-1], np.inf, limit=quad.limit,
                          epsabs=quad.abs_tol, epsrel=quad.rel_tol)
    return total + v


# ---------------------------------------------------------------------------
# One-dimensional measures (for axes families)
# ---------------------------------------------------------------------------

class Measure1D:
    def integrate(self, fn, quad=None, points=()):
        raise NotImplementedError


@dataclass(frozen=True)
class AtomicMeasure1D(Measure1D):
    """Finite sum of weighted atoms on (0, inf)."""

    atoms: Sequence[Tuple[float, float]]   # (location, mass)

    def integrate(self, fn, quad=None, points=()):
        return float(sum(m * fn(x) for x, m in self.atoms))


@dataclass(frozen=True)
class DensityMeasure1D(Measure1D):
    """Measure with a density on (lower, upper)."""

    density: object
    lower: float = 0.0
    upper: float = math.inf

    def integrate(self, fn, quad=None, points=()):
        quad = quad or _DEFAULT_QUAD
        g = lambda x: fn(x) * self.density(x)
        if math.isinf(self.upper):
            return _quad_pieces(g, points, quad, lower=self.lower)
        pts = sorted(p for p in np.atleast_1d(points)
                     if self.lower < p < self.upper)
        edges = [self.lower] + pts + [self.upper]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            v, _ = integrate.quad(g, a, b, limit=quad.limit,
                                  epsabs=quad.abs_tol, epsrel=quad.rel_tol)
            total += v
        return total


# ---------------------------------------------------------------------------
# Bivariate jump-intensity measures
# ---------------------------------------------------------------------------

class TruncatedSampler:
    """Sampling view of a measure restricted to first coordinate > eps.

    ``rate`` is the retained total mass, ``bias_x2`` the discarded drift
    Integral_{x1 <= eps} x2 Lambda, and ``sample`` draws (x1, x2) marks
    from the normalized retained measure.
    """

    def __init__(self, rate, bias_x2, sample_fn):
        self.rate = float(rate)
        self.bias_x2 = float(bias_x2)
        self._sample_fn = sample_fn

    def sample(self, rng, size):
        return self._sample_fn(rng, size)


class LevyMeasure2D:
    """Bivariate jump intensity on (0,inf)^2 (axes allowed).

    Subclasses provide Laplace-type integrals (for the cumulant equations),
    the second-coordinate mean (mass condition), and a truncated sampler.
    """

    def laplace_moments(self, f, lam, quad=None):
        """(Integral (1-exp(-f(x1)-lam*x2)) dLambda,
            Integral x2*exp(-f(x1)-lam*x2) dLambda)."""
        raise NotImplementedError

    def x2_mean(self):
        raise NotImplementedError

    def truncated_sampler(self, eps):
        raise NotImplementedError

    @property
    def finite_activity(self):
        return False


@dataclass(frozen=True)
class AtomicMeasure(LevyMeasure2D):
    """Finite list of weighted atoms (x1, x2, mass): everything is exact."""

    atoms: Sequence[Tuple[float, float, float]]

    def __post_init__(self):
        arr = np.asarray(self.atoms, dtype=np.float64).reshape(-1, 3)
        if (arr[:, 2] < 0).any():
            raise ValueError("atom masses must be nonnegative")
        object.__setattr__(self, "_arr", arr)

    @property
    def finite_activity(self):
        return True

    def laplace_moments(self, f, lam, quad=None):
        x1, x2, m = self._arr.T
        w = np.exp(-f(x1) - lam * x2)
        return float(np.sum(m * (1.0 - w))), float(np.sum(m * x2 * w))

    def x2_mean(self):
        x1, x2, m = self._arr.T
        return float(np.sum(m * x2))

    def truncated_sampler(self, eps):
        x1, x2, m = self._arr.T
        keep = x1 > eps
        bias = float(np.sum(m[~keep] * x2[~keep]))
        rate = float(np.sum(m[keep]))
        xk1, xk2 = x1[keep], x2[keep]
        if rate <= 0:
            raise ValueError("truncation removed all atoms")
        probs = m[keep] / rate

        def sample(rng, size):
            idx = rng.choice(probs.size, size=size, p=probs)
            return xk1[idx], xk2[idx]

        return TruncatedSampler(rate, bias, sample)


class DiagonalMeasure(LevyMeasure2D):
    """Measure carried by the ray x2 = slope * x1, with a first-coordinate
    density g on (0, inf)."""

    def __init__(self, density, slope=1.0):
        self._g = density
        self.slope = float(slope)

    def laplace_moments(self, f, lam, quad=None):
        quad = quad or _DEFAULT_QUAD
        s = self.slope
        pts = f.breakpoints

        def h(t):
            return self._g(t) * -math.expm1(-f(t) - lam * s * t)

        def hd(t):
            return self._g(t) * s * t * math.exp(-f(t) - lam * s * t)

        return (_quad_pieces(h, pts, quad), _quad_pieces(hd, pts, quad))

    def x2_mean(self):
        quad = _DEFAULT_QUAD
        return self.slope * _quad_pieces(lambda t: t * self._g(t), (), quad)

    def tail_mass(self, a):
        """Mass of {x1 > a}, by quadrature (subclasses may override)."""
        quad = _DEFAULT_QUAD
        return _quad_pieces(self._g, (), quad, lower=a)

    def x2_mean_below(self, eps):
        quad = _DEFAULT_QUAD
        v, _ = integrate.quad(lambda t: self.slope * t * self._g(t), 0.0, eps,
                              limit=quad.limit, epsabs=quad.abs_tol,
                              epsrel=quad.rel_tol)
        return v

    def _inverse_tail(self, targets, eps):
        """x solving tail_mass(x) = target, vectorized, for targets in
        (0, tail_mass(eps)].  Generic grid-interpolation implementation."""
        lo = math.log(eps)
        hi = lo
        m_eps = self.tail_mass(eps)
        while self.tail_mass(math.exp(hi)) > 1e-16 * m_eps:
            hi += 1.0
        grid = np.linspace(lo, hi, 4097)
        tails = np.array([self.tail_mass(math.exp(g)) for g in grid])
        # interpolate log-tail (strictly decreasing) against log-location
        logt = np.log(np.maximum(tails, 1e-300))
        return np.exp(np.interp(np.log(targets), logt[::-1], grid[::-1]))

    def truncated_sampler(self, eps):
        if eps <= 0:
            raise ValueError("this measure has infinite activity: eps > 0 "
                             "is required")
        rate = self.tail_mass(eps)
        bias = self.x2_mean_below(eps)
        slope = self.slope

        def sample(rng, size):
            u = rng.random(size)
            x1 = self._inverse_tail(rate * u, eps)
            return x1, slope * x1

        return TruncatedSampler(rate, bias, sample)


class NeutralMutationMeasure(DiagonalMeasure):
    """Diagonal family x2 = c*x1 with first-coordinate density
    t**(-1-1/beta) * rho(c * t**(1-1/beta)); for beta = 2 the tail and
    density have closed forms, enabling exact inverse-CDF sampling."""

    def __init__(self, beta, b, c):
        if not (1.0 < beta <= 2.0):
            raise ValueError("beta must lie in (1, 2]")
        if b <= 0 or c <= 0:
            raise ValueError("b and c must be positive")
        self.beta, self.b, self.c = float(beta), float(b), float(c)
        super().__init__(lambda t: neutral_levy_marginal(beta, b, c, t),
                         slope=c)

    def x2_mean(self):
        if self.beta == 2.0:
            # c * Integral t * g(t) dt with the closed-form density:
            # = c/(2*sqrt(pi*b)) * Integral t^(-1/2) e^(-mu t) dt = 1 exactly
            return 1.0
        return super().x2_mean()

    def tail_mass(self, a):
        if self.beta == 2.0:
            b, c = self.b, self.c
            mu = c * c / (4.0 * b)
            if a <= 0:
                return math.inf
            return (math.exp(-mu * a) / math.sqrt(math.pi * b * a)
                    - (c / b) * 0.5 * special.erfc(math.sqrt(mu * a)))
        return super().tail_mass(a)

    def x2_mean_below(self, eps):
        if self.beta == 2.0:
            # c * Integral_0^eps t*g(t) dt = (c/sqrt(pi*b)) *
            #   Integral_0^eps t^(-1/2)/2 e^(-mu t) dt
            b, c = self.b, self.c
            mu = c * c / (4.0 * b)
            if mu == 0.0:
                return c * math.sqrt(eps / (math.pi * b))
            return (c / math.sqrt(math.pi * b)) * 0.5 \
                * math.sqrt(math.pi / mu) * special.erf(math.sqrt(mu * eps))
        return super().x2_mean_below(eps)

    def _inverse_tail(self, targets, eps):
        if self.beta != 2.0:
            return super()._inverse_tail(targets, eps)
        # closed-form tail: interpolated first guess, then vectorized
        # Newton iterations on the exact tail to machine precision
        b, c = self.b, self.c
        mu = c * c / (4.0 * b)
        k = 1.0 / math.sqrt(math.pi * b)

        def tail(x):
            return (k * np.exp(-mu * x) / np.sqrt(x)
                    - (c / b) * 0.5 * special.erfc(np.sqrt(mu * x)))

        def dens(x):
            return np.exp(-mu * x) / (2.0 * np.sqrt(math.pi * b * x ** 3))

        lo = math.log(eps)
        hi = max(lo + 1.0, math.log((745.0 / mu) if mu > 0 else 1e12))
        grid = np.exp(np.linspace(lo, hi, 513))
        tg = tail(grid)
        logt = np.log(np.maximum(tg, 1e-300))
        x = np.exp(np.interp(np.log(targets), logt[::-1],
                             np.log(grid)[::-1]))
        for _ in range(4):
            x += (tail(x) - targets) / dens(x)
            np.clip(x, eps, grid[-1], out=x)
        return x


def _one_type_psi_m(beta, b, r):
    """Laplace exponent of the migrant-mass kernel:
    psi_m(r) = b*((r+1)**beta - r**beta - 1)."""
    return b * ((r + 1.0) ** beta - r ** beta - 1.0)


def one_type_kernel_bias(beta, b, eps):
    """Mean mass discarded per unit time when the kernel's jumps are
    truncated below eps: Integral_0^eps x*(1-e^(-x)) dnu."""
    if beta == 2.0 or eps <= 0:
        return 0.0
    k = stable_jump_intensity_constant(beta, b)
    v, _ = integrate.quad(
        lambda x: x * -math.expm1(-x) * k * x ** (-1.0 - beta), 0.0, eps,
        limit=200, epsabs=1e-14, epsrel=1e-10)
    return v


def one_type_kernel_sample(beta, b, x1, eps, rng):
    """One draw of the migrant-mass subordinator at time x1: the stable
    motion's jumps thinned by retention probability 1 - e^(-x) (a jump of
    size x is kept when it exceeds its exponential mark), truncated below
    eps.  beta = 2 has no jumps and degenerates to the drift 2*b*x1."""
    if x1 < 0:
        raise ValueError("x1 must be nonnegative")
    if x1 == 0.0:
        return 0.0
    if beta == 2.0:
        return 2.0 * b * x1
    if eps <= 0:
        raise ValueError("eps > 0 required for beta < 2")
    k = stable_jump_intensity_constant(beta, b)
    # thinned jump rate above eps
    rate, _ = integrate.quad(
        lambda x: -math.expm1(-x) * k * x ** (-1.0 - beta), eps, np.inf,
        limit=200, epsabs=1e-12, epsrel=1e-10)
    n = int(rng.poisson(x1 * rate))
    total = 0.0
    got = 0
    # envelope min(x, 1) * x^(-1-beta) dominates the thinned intensity
    # (1 - e^(-x)) * x^(-1-beta) with acceptance ratio >= 1 - 1/e; both
    # envelope pieces invert in closed form
    A = eps ** (1.0 - beta)
    m1 = (A - 1.0) / (beta - 1.0) if eps < 1.0 else 0.0   # x^(-beta) on (eps,1)
    m2 = 1.0 / beta if eps < 1.0 else eps ** -beta / beta
    p1 = m1 / (m1 + m2)
    while got < n:
        m = n - got
        u = rng.random(m)
        head = rng.random(m) < p1
        x = np.empty(m)
        if eps < 1.0:
            x[head] = (A - u[head] * (A - 1.0)) ** (1.0 / (1.0 - beta))
            x[~head] = u[~head] ** (-1.0 / beta)
        else:
            x = eps * u ** (-1.0 / beta)
        acc = rng.random(m) < -np.expm1(-x) / np.minimum(x, 1.0)
        total += float(x[acc].sum())
        got += int(acc.sum())
    return total


class OneTypeSiblingMeasure(LevyMeasure2D):
    """Family where the migrant mass is carried by the colony's own
    lineage: first-coordinate density rho(0)*t**(-1-1/beta)*e^(-b t), and
    conditionally on x1 = t the second coordinate is the migrant-mass
    kernel at time t (Laplace exponent psi_m above)."""

    def __init__(self, beta, b, kernel_eps=1e-8):
        if not (1.0 < beta <= 2.0):
            raise ValueError("beta must lie in (1, 2]")
        if b <= 0:
            raise ValueError("b must be positive")
        self.beta, self.b = float(beta), float(b)
        self.rho0 = stable_density_at_zero(StableParams(beta, b))
        self.kernel_eps = float(kernel_eps)

    def _marginal(self, t):
        return self.rho0 * t ** (-1.0 - 1.0 / self.beta) * math.exp(-self.b * t)

    def laplace_moments(self, f, lam, quad=None):
        quad = quad or _DEFAULT_QUAD
        beta, b = self.beta, self.b
        pm = _one_type_psi_m(beta, b, lam)
        # d/dlam of exp(-t*psi_m(lam)) gives the x2 moment in closed form
        dpm = b * beta * ((lam + 1.0) ** (beta - 1.0) - lam ** (beta - 1.0)) \
            if beta < 2.0 else 2.0 * b
        pts = f.breakpoints

        def h(t):
            return self._marginal(t) * -math.expm1(-f(t) - t * pm)

        def hd(t):
            return self._marginal(t) * math.exp(-f(t) - t * pm) * t * dpm

        return (_quad_pieces(h, pts, quad), _quad_pieces(hd, pts, quad))

    def x2_mean(self):
        quad = _DEFAULT_QUAD
        beta, b = self.beta, self.b
        drift = b * beta if beta < 2.0 else 2.0 * b
        return _quad_pieces(lambda t: self._marginal(t) * drift * t, (), quad)

    def truncated_sampler(self, eps):
        if eps <= 0:
            raise ValueError("this measure has infinite activity: eps > 0 "
                             "is required")
        quad = _DEFAULT_QUAD
        beta, b = self.beta, self.b
        rate = _quad_pieces(self._marginal, (), quad, lower=eps)
        drift = b * beta if beta < 2.0 else 2.0 * b
        bias, _ = integrate.quad(lambda t: self._marginal(t) * drift * t,
                                 0.0, eps, limit=quad.limit,
                                 epsabs=quad.abs_tol, epsrel=quad.rel_tol)
        rho0 = self.rho0
        # proposal: pure power-law tail (inverse-CDF), accept w.p. e^(-b t)
        prop_tail_inv = lambda u: eps * u ** (-beta)
        kern_eps = self.kernel_eps

        def sample(rng, size):
            x1 = np.empty(size)
            got = 0
            while got < size:
                m = size - got
                t = eps * rng.random(m) ** (-beta)
                acc = rng.random(m) < np.exp(-b * t)
                k = int(acc.sum())
                x1[got:got + k] = t[acc][:k]
                got += k
            if beta == 2.0:
                return x1, 2.0 * b * x1
            x2 = np.array([one_type_kernel_sample(beta, b, t, kern_eps, rng)
                           for t in x1])
            return x1, x2

        return TruncatedSampler(rate, bias, sample)


@dataclass(frozen=True)
class AxesMeasure(LevyMeasure2D):
    """Measure supported on the two coordinate axes:
    measure1 on {x2 = 0} and measure2 on {x1 = 0}."""

    measure1: Measure1D
    measure2: Measure1D

    def laplace_moments(self, f, lam, quad=None):
        quad = quad or _DEFAULT_QUAD
        i1 = self.measure1.integrate(lambda x: -np.expm1(-f(x)), quad,
                                     points=f.breakpoints)
        i2 = self.measure2.integrate(lambda x: -np.expm1(-lam * x), quad)
        d2 = self.measure2.integrate(lambda x: x * np.exp(-lam * x), quad)
        return float(i1 + i2), float(d2)

    def x2_mean(self):
        return float(self.measure2.integrate(lambda x: x))

    @property
    def finite_activity(self):
        return (isinstance(self.measure1, AtomicMeasure1D)
                and isinstance(self.measure2, AtomicMeasure1D))

    def truncated_sampler(self, eps):
        if not self.finite_activity:
            raise NotImplementedError(
                "sampling implemented only for atomic axes measures")
        a1 = [(x, m) for x, m in self.measure1.atoms if x > eps]
        a2 = list(self.measure2.atoms)
        locs = np.array([x for x, _ in a1] + [0.0] * len(a2))
        x2s = np.array([0.0] * len(a1) + [x for x, _ in a2])
        ms = np.array([m for _, m in a1] + [m for _, m in a2])
        bias = 0.0  # truncated first-axis atoms carry no second-coordinate mass
        rate = float(ms.sum())
        if rate <= 0:
            raise ValueError("truncation removed all atoms")
        probs = ms / rate

        def sample(rng, size):
            idx = rng.choice(probs.size, size=size, p=probs)
            return locs[idx], x2s[idx]

        return TruncatedSampler(rate, bias, sample)


def check_mass_condition(measure):
    """(Integral x2 dLambda, whether it is <= 1 + 1e-9)."""
    value = measure.x2_mean()
    return value, bool(value <= 1.0 + 1e-9)


# ---------------------------------------------------------------------------
# Poisson construction of the limit measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointMeasureSample:
    """One realization of the limit measure: retained first-coordinate
    marks, the stopping horizon, and the truncation bookkeeping."""

    atoms: np.ndarray
    sigma_y: float
    y: float
    truncation_eps: float
    truncation_bias_bound: float


def sample_limit_measure(measure, y, eps, rng, max_sigma=None,
                         _sampler=None):
    """Exact sample of the limit measure at height y (up to eps-truncation).

    Marked Poisson atoms arrive at the truncated measure's total rate; the
    level t - Y_t rises at unit slope between arrivals and drops by x2 at
    each one, so the first gap during which it reaches y locates sigma_y
    exactly.  ``max_sigma`` optionally censors pathologically long runs
    (returns sigma_y = inf in that case).
    """
    if y <= 0:
        raise ValueError("y must be positive")
    if eps < 0 or (eps == 0 and not measure.finite_activity):
        raise ValueError("eps = 0 is allowed only for finite-activity "
                         "measures")
    sampler = _sampler or measure.truncated_sampler(eps)
    rate = sampler.rate
    atoms: List[np.ndarray] = []
    t = 0.0
    v = 0.0                      # current value of t - Y_t
    block = 64
    while True:
        gaps = rng.exponential(1.0 / rate, size=block)
        x1, x2 = sampler.sample(rng, block)
        pre = v + np.cumsum(gaps) - np.concatenate(([0.0], np.cumsum(x2)[:-1]))
        hit = np.nonzero(pre >= y)[0]
        if hit.size:
            j = int(hit[0])
            v_prev = pre[j] - gaps[j]
            sigma = t + float(np.sum(gaps[:j])) + (y - v_prev)
            atoms.append(x1[:j])
            return PointMeasureSample(
                atoms=np.concatenate(atoms) if atoms else np.empty(0),
                sigma_y=sigma, y=y, truncation_eps=eps,
                truncation_bias_bound=sampler.bias_x2)
        atoms.append(x1)
        t += float(np.sum(gaps))
        v = float(pre[-1] - x2[-1])
        if max_sigma is not None and t > max_sigma:
            return PointMeasureSample(
                atoms=np.concatenate(atoms), sigma_y=math.inf, y=y,
                truncation_eps=eps, truncation_bias_bound=sampler.bias_x2)
        block = min(2 * block, 1 << 16)


def limit_functional_estimates(measure, y, eps, fns, n_replicas, seed,
                               stop_threshold=None):
    """Per-replica sums sum_atoms f(x1) over the limit measure at height y,
    for several test functions at once.

    When every per-function partial sum of a replica exceeds
    ``stop_threshold`` the replica is abandoned early (its exp(-sum)
    contribution is below exp(-stop_threshold)); the stopped flag records
    this.  Returns (sums[n_replicas, K], stopped flags, sigma_y array with
    inf for stopped replicas).
    """
    sampler = measure.truncated_sampler(eps)
    rate = sampler.rate
    K = len(fns)
    sums = np.zeros((n_replicas, K))
    stopped = np.zeros(n_replicas, dtype=bool)
    sigmas = np.full(n_replicas, np.inf)
    rng = generator(seed, "limit-functional")
    for rep in range(n_replicas):
        t = 0.0
        v = 0.0
        block = 256
        while True:
            gaps = rng.exponential(1.0 / rate, size=block)
            x1, x2 = sampler.sample(rng, block)
            pre = (v + np.cumsum(gaps)
                   - np.concatenate(([0.0], np.cumsum(x2)[:-1])))
            hit = np.nonzero(pre >= y)[0]
            if hit.size:
                j = int(hit[0])
                v_prev = pre[j] - gaps[j]
                sigmas[rep] = t + float(np.sum(gaps[:j])) + (y - v_prev)
                for k, f in enumerate(fns):
                    sums[rep, k] += float(np.sum(f(x1[:j])))
                break
            for k, f in enumerate(fns):
                sums[rep, k] += float(np.sum(f(x1)))
            t += float(np.sum(gaps))
            v = float(pre[-1] - x2[-1])
            if stop_threshold is not None and sums[rep].min() >= stop_threshold:
                stopped[rep] = True
                break
            block = min(2 * block, 1 << 15)
    return sums, stopped, sigmas


def sample_Y1(measure, eps, n_replicas, seed):
    """n_replicas draws of the migrant-mass subordinator at time 1 under
    the eps-truncated measure (its mean must not exceed 1)."""
    sampler = measure.truncated_sampler(eps)
    rng = generator(seed, "y1-marginal")
    counts = rng.poisson(sampler.rate, size=n_replicas)
    total = int(counts.sum())
    _, x2 = sampler.sample(rng, total)
    seg = np.repeat(np.arange(n_replicas), counts)
    out = np.zeros(n_replicas)
    np.add.at(out, seg, x2)
    return out


# ---------------------------------------------------------------------------
# Ballot-style identity between the stopped and unstopped constructions
# ---------------------------------------------------------------------------

def ballot_identity_check(measure, y_max, t_bins, n_replicas, seed,
                          count_classes=(0, 1, 2, 3), alpha=0.01):
    """Check that the law of (limit measure, sigma_y), integrated over
    heights y, matches the unstopped Poisson snapshot reweighted by
    (t - Y_t)/t, cell by cell on a (count class) x (t bin) x (y bin) grid.

    Both sides are estimated by independent Monte Carlo with n_replicas
    draws each; the test passes when every sufficiently occupied cell's
    standardized discrepancy is below the Bonferroni-corrected normal
    quantile at level ``alpha``.
    """
    if not measure.finite_activity:
        raise ValueError("the identity check needs a finite-activity measure")
    t_bins = np.asarray(t_bins, dtype=np.float64)
    y_bins = np.linspace(0.0, y_max, 5)
    n_t, n_y = t_bins.size - 1, y_bins.size - 1
    classes = list(count_classes)
    n_c = len(classes)
    t0 = time.time()
    sampler = measure.truncated_sampler(0.0)

    def class_index(count):
        # the last class absorbs all larger counts
        for i, c in enumerate(classes):
            if count == c:
                return i
        return n_c - 1 if count >= classes[-1] else -1

    rng_l = generator(seed, "ballot-left")
    rng_r = generator(seed, "ballot-right")

    # left side: y uniform on (0, y_max); indicator of (class, t bin, y bin)
    left = np.zeros((n_c, n_t, n_y))
    left_sq = np.zeros_like(left)
    for _ in range(n_replicas):
        y = y_max * rng_l.random()
        s = sample_limit_measure(measure, y, 0.0, rng_l,
                                 max_sigma=float(t_bins[-1]) * 4.0,
                                 _sampler=sampler)
        ti = int(np.searchsorted(t_bins, s.sigma_y, side="right")) - 1
        yi = int(np.searchsorted(y_bins, y, side="right")) - 1
        ci = class_index(s.atoms.size)
        if 0 <= ti < n_t and 0 <= yi < n_y and ci >= 0:
            left[ci, ti, yi] += y_max
            left_sq[ci, ti, yi] += y_max * y_max

    # right side: t uniform on (0, t_max); Poisson snapshot with weight
    # (t - Y_t)/t on the event that t - Y_t lies in the y bin
    t_max = float(t_bins[-1])
    right = np.zeros_like(left)
    right_sq = np.zeros_like(left)
    for _ in range(n_replicas):
        t = t_max * rng_r.random()
        n_atoms = rng_r.poisson(sampler.rate * t)
        if n_atoms:
            _, x2 = sampler.sample(rng_r, n_atoms)
            level = t - float(np.sum(x2))
        else:
            level = t
        if level <= 0:
            continue
        ti = int(np.searchsorted(t_bins, t, side="right")) - 1
        yi = int(np.searchsorted(y_bins, level, side="right")) - 1
        ci = class_index(n_atoms)
        if 0 <= ti < n_t and 0 <= yi < n_y and ci >= 0:
            w = t_max * level / t
            right[ci, ti, yi] += w
            right_sq[ci, ti, yi] += w * w

    n = float(n_replicas)
    l_mean, r_mean = left / n, right / n
    l_var = np.maximum(left_sq / n - l_mean ** 2, 0.0) / n
    r_var = np.maximum(right_sq / n - r_mean ** 2, 0.0) / n
    se = np.sqrt(l_var + r_var)
    occ = (int((left > 0).sum()), int((right > 0).sum()))
    usable = se > 0
    z = np.zeros_like(se)
    z[usable] = (l_mean[usable] - r_mean[usable]) / se[usable]
    n_cells = int(usable.sum())
    if n_cells == 0:
        threshold = math.inf
    else:
        threshold = float(special.ndtri(1.0 - alpha / (2.0 * n_cells)))
    max_z = float(np.abs(z).max()) if n_cells else 0.0
    mismatched_empty = ((se == 0) & (np.abs(l_mean - r_mean) > 0)).sum()
    passed = (max_z <= threshold) and mismatched_empty == 0
    return StatTestResult(
        name="ballot-identity", estimate=max_z, target=0.0,
        stderr=1.0, tolerance=threshold, passed=bool(passed),
        runtime=time.time() - t0,
        details={"cells_tested": n_cells,
                 "occupied": [int(occ[0]), int(occ[1])],
                 "mismatched_empty_cells": int(mismatched_empty)})
