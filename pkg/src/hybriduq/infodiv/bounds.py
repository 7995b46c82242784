"""Risk-sensitive performance measures and the divergence bounds built on them.

All bounds have the form ``inf_{c>0} Lambda(c) + rho / c`` where ``Lambda`` is
either the sampled cumulant of the centered observable or one of its Bennett
majorants. The lower bound applies the same machinery to the negated
observable and flips the sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ComputationError, DomainError, ParameterError
from .optimize import C_FLOOR, DiscreteCGF, minimize_xi

METHODS = ("sampled", "bennett", "bennett_ab", "failure_closed_form", "linearized")

SMALL_VARIANCE = 1e-12


@dataclass(frozen=True)
class ObservableSamples:
    """Draws of the marginal performance measure under the nominal model.

    ``variance`` is the unbiased sample variance; ``population_variance``
    divides by ``M`` and is the variance of the empirical distribution.
    """

    values: np.ndarray
    mean: float
    variance: float
    upper_bound: float | None = None
    lower_bound: float | None = None

    @classmethod
    def from_values(cls, values, upper_bound=None, lower_bound=None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ParameterError("samples must be nonempty")
        if not np.all(np.isfinite(values)):
            raise ComputationError("samples contain non-finite values")
        if upper_bound is not None and np.any(values > upper_bound):
            raise DomainError(f"samples exceed the declared upper bound {upper_bound}")
        if lower_bound is not None and np.any(values < lower_bound):
            raise DomainError(f"samples fall below the declared lower bound {lower_bound}")
        mean = float(np.mean(values))
        variance = float(np.var(values, ddof=1)) if values.size > 1 else 0.0
        values.setflags(write=False)
        return cls(values, mean, variance, upper_bound, lower_bound)

    @property
    def size(self):
        return self.values.size

    @property
    def population_variance(self):
        return float(np.mean((self.values - self.mean) ** 2))

    def negated(self):
        """Samples of ``-H`` with the declared bounds swapped."""
        return ObservableSamples.from_values(
            -self.values,
            upper_bound=None if self.lower_bound is None else -self.lower_bound,
            lower_bound=None if self.upper_bound is None else -self.upper_bound,
        )


@dataclass(frozen=True)
class SideBound:
    """One side of a divergence bound."""

    value: float
    c_star: float
    rho: float
    method: str
    at_boundary: bool = False


@dataclass(frozen=True)
class DivergenceBound:
    xi_minus: float
    xi_plus: float
    c_star_minus: float
    c_star_plus: float
    rho: float
    method: str
    flags: tuple = field(default=())

    @classmethod
    def from_sides(cls, lower, upper):
        flags = tuple(
            f"{name}_at_boundary"
            for name, side in (("minus", lower), ("plus", upper))
            if side.at_boundary
        )
        return cls(
            xi_minus=lower.value,
            xi_plus=upper.value,
            c_star_minus=lower.c_star,
            c_star_plus=upper.c_star,
            rho=upper.rho,
            method=upper.method,
            flags=flags,
        )

    def contains(self, x):
        return self.xi_minus <= x <= self.xi_plus


def _check_sign(sign):
    if sign not in (1, -1):
        raise ParameterError(f"sign must be +1 or -1, got {sign}")


def _check_rho(rho):
    if not rho >= 0 or not math.isfinite(rho):
        raise ParameterError(f"rho must be a finite nonnegative number, got {rho}")


def empirical_cgf(samples, center=None):
    """Log-MGF of the empirical law of ``H - center`` (default: sample mean)."""
    values = samples.values
    if center is None:
        # the floating-point mean of identical values can miss them by an ulp
        center = values[0] if np.ptp(values) == 0 else samples.mean
    return DiscreteCGF(values - center)


def cumulant_estimator(samples, c, center=None):
    """Sampled ``(1/c) log mean exp(c (H - mean))``; 0 at ``c = 0``.

    ``center`` replaces the sample mean when the true mean is known.
    """
    if samples.size == 0:
        raise ParameterError("samples must be nonempty")
    if c == 0:
        return 0.0
    value = empirical_cgf(samples, center)(c) / c
    if math.isnan(value):
        raise ComputationError(f"cumulant estimator is NaN at c={c}")
    return value


def optimal_c_init(variance, rho):
    """Small-budget optimum ``sqrt(2 rho / variance)``."""
    if not variance > 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    _check_rho(rho)
    return math.sqrt(2.0 * rho) / math.sqrt(variance)


def xi_linearized(variance, rho):
    """First-order bound ``sqrt(variance) * sqrt(2 rho)``."""
    if variance < 0:
        raise ParameterError(f"variance must be nonnegative, got {variance}")
    _check_rho(rho)
    return math.sqrt(variance) * math.sqrt(2.0 * rho)


def xi_from_cgf(cgf, rho, variance=None, method="sampled", c_max=None):
    """Upper divergence ``inf_c (K(c) + rho)/c`` for a given log-MGF ``K``."""
    _check_rho(rho)
    if variance is None:
        variance = cgf.variance
    if rho == 0 or variance <= 0:
        return SideBound(0.0, C_FLOOR, rho, method)
    c0 = optimal_c_init(variance, rho)
    res = minimize_xi(cgf, rho, c0=c0, c_max=c_max)
    return SideBound(res.value, res.c_star, rho, method, res.at_boundary)


def xi_bound(samples, rho, sign=1, c_max=None):
    """Sampled hybrid divergence for ``sign * H``, returned with the sign applied.

    ``sign=+1`` gives the upper bound ``Xi_+``; ``sign=-1`` gives
    ``Xi_- = -Xi(-H)``.
    """
    _check_sign(sign)
    if sign < 0:
        samples = samples.negated()
    side = xi_from_cgf(
        empirical_cgf(samples), rho, variance=samples.population_variance, c_max=c_max
    )
    return SideBound(sign * side.value, side.c_star, rho, "sampled", side.at_boundary)


def bennett_cgf(samples):
    """Two-point law attaining Bennett's bound for ``H <= upper_bound``."""
    if samples.upper_bound is None:
        raise ParameterError("Bennett bound requires an upper bound on the observable")
    s2 = samples.population_variance
    b = samples.upper_bound - samples.mean
    if s2 <= SMALL_VARIANCE:
        return None
    if not b > 0:
        raise DomainError(
            f"upper bound {samples.upper_bound} must exceed the mean {samples.mean}"
        )
    total = b * b + s2
    return DiscreteCGF([-s2 / b, b], [b * b / total, s2 / total])


def bennett_bound(samples, c):
    """Bennett majorant of the centered risk-sensitive measure at ``c >= 0``."""
    if c < 0:
        raise ParameterError(f"Bennett bound needs c >= 0, got {c}")
    cgf = bennett_cgf(samples)
    if c == 0 or cgf is None:
        return 0.0
    return cgf(c) / c


def bennett_ab_cgf(samples):
    """Two-point law on ``{a, b}`` with the sample mean (Bennett-(a,b))."""
    a, b = samples.lower_bound, samples.upper_bound
    if a is None or b is None:
        raise ParameterError("Bennett-(a,b) bound requires lower and upper bounds")
    if not a < b:
        raise DomainError(f"need a < b, got a={a}, b={b}")
    m = samples.mean
    return DiscreteCGF([a - m, b - m], [(b - m) / (b - a), (m - a) / (b - a)])


def bennett_ab_bound(samples, c):
    """Bennett-(a,b) majorant at any real ``c``; 0 at ``c = 0``."""
    cgf = bennett_ab_cgf(samples)
    if c == 0:
        return 0.0
    return cgf(c) / c


def concentration_xi(samples, rho, variant="bennett", sign=1, c_max=None):
    """Divergence bound with ``Lambda`` replaced by a Bennett majorant."""
    _check_sign(sign)
    if variant not in ("bennett", "bennett_ab"):
        raise ParameterError(f"unknown concentration variant {variant!r}")
    if sign < 0:
        samples = samples.negated()
    if variant == "bennett":
        cgf = bennett_cgf(samples)
        if cgf is None:
            return SideBound(0.0, C_FLOOR, rho, variant)
    else:
        cgf = bennett_ab_cgf(samples)
    side = xi_from_cgf(cgf, rho, method=variant, c_max=c_max)
    return SideBound(sign * side.value, side.c_star, rho, variant, side.at_boundary)


def divergence_bound(samples, rho, method="sampled"):
    """Both sides of the bound with one ``method``."""
    if method == "sampled":
        lower, upper = xi_bound(samples, rho, -1), xi_bound(samples, rho, 1)
    elif method in ("bennett", "bennett_ab"):
        lower = concentration_xi(samples, rho, method, -1)
        upper = concentration_xi(samples, rho, method, 1)
    elif method == "linearized":
        v = xi_linearized(samples.population_variance, rho)
        c = optimal_c_init(samples.population_variance, rho) if v > 0 else C_FLOOR
        lower = SideBound(-v, c, rho, method)
        upper = SideBound(v, c, rho, method)
    else:
        raise ParameterError(f"unknown bound method {method!r}")
    return DivergenceBound.from_sides(lower, upper)


def indicator_cgf(p):
    """Log-MGF of a centered Bernoulli(p) variable."""
    return DiscreteCGF([1.0 - p, -p], [p, 1.0 - p])


def failure_prob_interval(p, rho):
    """Interval containing ``Q(A)`` for every alternative within budget ``rho``.

    ``p`` is the nominal probability of the event ``A``.
    """
    if not 0 <= p <= 1:
        raise ParameterError(f"probability must lie in [0, 1], got {p}")
    _check_rho(rho)
    if p in (0.0, 1.0) or rho == 0:
        return float(p), float(p)
    upper = xi_from_cgf(indicator_cgf(p), rho, method="failure_closed_form")
    lower = xi_from_cgf(indicator_cgf(1.0 - p), rho, method="failure_closed_form")
    lo = min(max(p - lower.value, 0.0), 1.0)
    hi = min(max(p + upper.value, 0.0), 1.0)
    return lo, hi


def estimator_variance(samples, c_star, M):
    """Delta-method variance of the sampled ``Xi_+`` at fixed ``c_star``.

    ``Var[exp(c H)] / (c^2 M E[exp(c H)]^2)``, using moments of the empirical
    distribution of the samples.
    """
    if not c_star > 0:
        raise ParameterError(f"c_star must be positive, got {c_star}")
    if M < 2:
        raise ParameterError(f"M must be at least 2, got {M}")
    z = c_star * (samples.values - samples.mean)
    x = np.exp(z - z.max())
    mean = float(np.mean(x))
    var = float(np.mean((x - mean) ** 2))
    if var == 0.0:
        return 0.0
    return var / (c_star**2 * M * mean**2)
