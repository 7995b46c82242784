"""Stationary lognormal random fields on a uniform 1D grid.

The log-conductivity is Gaussian with constant mean ``mu`` and a
squared-exponential covariance with a nugget,

    C(r) = sigma2 * exp(-(r / (sqrt(2) * ell))**2)   for r > 0
    C(0) = sigma2 + tau2

Covariances are factorized with a dense Cholesky decomposition; on failure
a small multiple of the mean diagonal is added following a fixed schedule.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._rng import keyed_generator
from .errors import ParameterError, SingularCovarianceError, StateError

PARAM_NAMES = ("mu", "sigma2", "ell", "tau2")

JITTER_SCHEDULE = (1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class HyperParams:
    """Geostatistical parameter vector ``(mu, sigma2, ell, tau2)``."""

    mu: float
    sigma2: float
    ell: float
    tau2: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
        if self.sigma2 < 0 or self.tau2 < 0:
            raise ParameterError(
                f"variances must be nonnegative (sigma2={self.sigma2}, tau2={self.tau2})"
            )
        if self.ell <= 0:
            raise ParameterError(f"correlation length must be positive, got {self.ell}")
        if self.sigma2 + self.tau2 <= 0:
            raise ParameterError("sigma2 + tau2 must be positive")

    def as_array(self):
        return np.array([self.mu, self.sigma2, self.ell, self.tau2], dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    def perturbed(self, index, eps):
        """Return a copy with component ``index`` shifted by ``eps``."""
        name = PARAM_NAMES[index]
        try:
            return dataclasses.replace(self, **{name: getattr(self, name) + eps})
        except ParameterError as exc:
            raise ParameterError(f"perturbation of {name} by {eps}: {exc}") from exc

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Grid:
    """Cell centers of a uniform mesh of ``n`` cells on ``[x_lo, x_hi]``."""

    n: int
    x_lo: float = 0.0
    x_hi: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"grid needs at least 2 cells, got n={self.n}")
        if not self.x_hi > self.x_lo:
            raise ParameterError(f"empty interval [{self.x_lo}, {self.x_hi}]")

    @property
    def spacing(self):
        return (self.x_hi - self.x_lo) / self.n

    @property
    def points(self):
        return self.x_lo + (np.arange(self.n) + 0.5) * self.spacing


@dataclass(frozen=True)
class GaussianModel:
    """Mean and covariance of the log-field on a grid.

    ``chol`` is ``None`` until :func:`factorize` is applied; it then satisfies
    ``chol @ chol.T == cov + jitter_used * I``.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray | None = field(default=None, repr=False)
    jitter_used: float = 0.0

    @property
    def dimension(self):
        return self.mean.shape[0]

    @property
    def is_factorized(self):
        return self.chol is not None


@dataclass(frozen=True)
class FieldSample:
    """One realization of the log-field and the conductivity it induces."""

    log_values: np.ndarray
    values: np.ndarray
    seed: int | tuple


def se_nugget_cov(points, params):
    """Covariance matrix of the log-field at arbitrary 1D ``points``."""
    x = np.asarray(points, dtype=float)
    r = np.abs(x[:, None] - x[None, :])
    cov = params.sigma2 * np.exp(-((r / (np.sqrt(2.0) * params.ell)) ** 2))
    # the nugget sits on the zero-lag entries only
    cov[r == 0] = params.sigma2 + params.tau2
    return cov


def build_covariance(grid, params):
    """Gaussian model of the log-conductivity on ``grid`` for ``params``."""
    cov = se_nugget_cov(grid.points, params)
    mean = np.full(grid.n, params.mu, dtype=float)
    return GaussianModel(mean=mean, cov=cov)


def cholesky_with_jitter(cov):
    """Lower Cholesky factor of ``cov``, adding diagonal jitter if needed.

    Returns ``(chol, jitter)`` where ``jitter`` is 0 when the plain
    factorization succeeds.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return linalg.cholesky(cov, lower=True, check_finite=True), 0.0
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(cov)))
    if not scale > 0:
        scale = 1.0
    eye = np.eye(cov.shape[0])
    jitter = 0.0
    for eps in JITTER_SCHEDULE:
        jitter = eps * scale
        try:
            return linalg.cholesky(cov + jitter * eye, lower=True), jitter
        except linalg.LinAlgError:
            continue
    raise SingularCovarianceError(
        f"covariance not positive definite even with jitter {jitter:.3g}", jitter=jitter
    )


def factorize(model):
    """Return ``model`` with its Cholesky factor populated."""
    if model.is_factorized:
        return model
    chol, jitter = cholesky_with_jitter(model.cov)
    return dataclasses.replace(model, chol=chol, jitter_used=jitter)


def standard_normal(seed, n):
    """Standard normal vector addressed by ``seed`` (an int or a key tuple)."""
    key = seed if isinstance(seed, tuple) else (seed,)
    return keyed_generator(*key).standard_normal(n)


def sample_log_field(model, seed):
    """Draw ``mean + chol @ z`` with ``z`` generated deterministically from ``seed``."""
    if not model.is_factorized:
        raise StateError("model must be factorized before sampling")
    z = standard_normal(seed, model.dimension)
    log_values = model.mean + model.chol @ z
    return FieldSample(log_values=log_values, values=np.exp(log_values), seed=seed)


def cov_derivatives(grid, params):
    """Analytic derivatives of the mean and covariance in each hyperparameter.

    Returns a dict mapping each name in :data:`PARAM_NAMES` to a pair
    ``(dmean, dcov)``.
    """
    x = grid.points
    n = grid.n
    r = np.abs(x[:, None] - x[None, :])
    off = r > 0
    kernel = np.exp(-((r / (np.sqrt(2.0) * params.ell)) ** 2))

    zeros_n = np.zeros(n)
    d_sigma2 = np.where(off, kernel, 1.0)
    d_ell = np.where(off, params.sigma2 * kernel * r**2 / params.ell**3, 0.0)
    return {
        "mu": (np.ones(n), np.zeros((n, n))),
        "sigma2": (zeros_n.copy(), d_sigma2),
        "ell": (zeros_n.copy(), d_ell),
        "tau2": (zeros_n.copy(), np.eye(n)),
    }
