"""Minimization of ``xi(c) = K(c)/c + rho/c`` over ``c > 0``.

``K`` is the log moment generating function of a centered observable. The
stationarity condition ``xi'(c) = 0`` is ``c K'(c) - K(c) = rho`` and the
left side is nondecreasing in ``c`` (its derivative is ``c K''(c) >= 0``),
so the minimizer is unique when it exists. We solve that scalar equation by
Newton's method inside a bisection bracket and fall back to golden-section
search on ``xi`` itself when the iteration stalls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ComputationError

C_FLOOR = 1e-8
EXP_GUARD = 700.0
MAX_ITER = 60


class DiscreteCGF:
    """Log-MGF of a finitely supported distribution.

    ``atoms`` are support points and ``weights`` their probabilities. Both the
    empirical distribution of centered samples and the extremal two-point laws
    of the Bennett inequalities are of this form.
    """

    def __init__(self, atoms, weights=None):
        atoms = np.asarray(atoms, dtype=float)
        if weights is None:
            weights = np.full(atoms.shape, 1.0 / atoms.size)
        weights = np.asarray(weights, dtype=float)
        keep = weights > 0
        self.atoms = atoms[keep]
        self.weights = weights[keep]
        with np.errstate(divide="ignore"):
            self._logw = np.log(self.weights)
        if self.atoms.size == 0:
            raise ComputationError("distribution has no support")
        self._point_mass = bool(self.atoms.min() == self.atoms.max())

    @property
    def top(self):
        """Largest support point (sets the exponent overflow guard)."""
        return float(self.atoms.max())

    @property
    def variance(self):
        m = float(np.dot(self.weights, self.atoms))
        return float(np.dot(self.weights, (self.atoms - m) ** 2))

    def __call__(self, c):
        return self.derivs(c)[0]

    def derivs(self, c):
        """Return ``(K, K', K'')`` at ``c``."""
        if self._point_mass:
            a = float(self.atoms[0])
            return c * a, a, 0.0
        z = c * self.atoms + self._logw
        zmax = z.max()
        p = np.exp(z - zmax)
        total = p.sum()
        k = zmax + math.log(total)
        p /= total
        d1 = float(np.dot(p, self.atoms))
        d2 = float(np.dot(p, (self.atoms - d1) ** 2))
        return float(k), d1, d2


@dataclass(frozen=True)
class Minimum:
    value: float
    c_star: float
    at_boundary: bool = False
    iterations: int = 0
    method: str = "newton"


def c_upper_limit(cgf, c_max=None):
    """Largest admissible ``c`` given the exp overflow guard."""
    top = getattr(cgf, "top", None)
    limit = np.inf if top is None or top <= 0 else EXP_GUARD / top
    if c_max is not None:
        limit = min(limit, c_max)
    if not np.isfinite(limit):
        limit = 1e8
    return max(limit, 2 * C_FLOOR)


def golden_section(f, lo, hi, tol=1e-10, max_iter=200):
    """Golden-section minimization of a unimodal ``f`` on ``[lo, hi]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def minimize_xi(cgf, rho, c0=None, c_max=None):
    """Minimize ``(K(c) + rho) / c`` over ``c`` in ``[C_FLOOR, c_max]``.

    ``cgf`` must provide ``derivs(c) -> (K, K', K'')``. Returns a
    :class:`Minimum`; ``at_boundary`` is set when the minimum is not interior
    (typically a bounded observable whose budget exceeds what any interior
    ``c`` can use).
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    lo = C_FLOOR
    hi = c_upper_limit(cgf, c_max)

    def xi(c):
        value = (cgf.derivs(c)[0] + rho) / c
        if not math.isfinite(value):
            raise ComputationError(f"non-finite objective at c={c}")
        return value

    def phi(c):
        k, d1, d2 = cgf.derivs(c)
        return c * d1 - k - rho, c * d2

    g_lo, _ = phi(lo)
    if g_lo >= 0:
        return Minimum(xi(lo), lo, at_boundary=True, method="boundary")
    g_hi, _ = phi(hi)
    if g_hi <= 0:
        # xi still decreasing at the guard: its infimum is the limit c -> inf,
        # which for a finitely supported law is the largest atom
        value = xi(hi)
        top = getattr(cgf, "top", None)
        if top is not None:
            value = min(value, top)
        return Minimum(value, hi, at_boundary=True, method="boundary")

    c = lo if c0 is None or not (lo < c0 < hi) else float(c0)
    a, b = lo, hi
    for it in range(1, MAX_ITER + 1):
        g, dg = phi(c)
        if g == 0:
            return Minimum(xi(c), c, iterations=it)
        if g < 0:
            a = c
        else:
            b = c
        step_ok = dg > 0
        if step_ok:
            c_new = c - g / dg
            step_ok = a < c_new < b
        if not step_ok:
            # geometric bisection: the bracket spans many decades
            c_new = math.sqrt(a * b)
        if abs(c_new - c) <= 1e-8 * (1.0 + c):
            return Minimum(xi(c_new), c_new, iterations=it)
        c = c_new

    c, value = golden_section(xi, a, b)
    return Minimum(value, c, iterations=MAX_ITER, method="golden")
