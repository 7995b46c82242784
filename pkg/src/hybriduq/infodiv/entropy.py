"""Relative entropy and Fisher information of Gaussian log-field models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..errors import DimensionError, ParameterError
from ..grf import (
    PARAM_NAMES,
    build_covariance,
    cholesky_with_jitter,
    cov_derivatives,
    factorize,
)


@dataclass(frozen=True)
class RelEntropyResult:
    """Closed-form Gaussian relative entropy and its constituent terms.

    ``logdet_terms`` is ``(logdet_nominal, logdet_alternative)``.
    """

    value: float
    logdet_terms: tuple
    trace_term: float
    mahalanobis_term: float
    dimension: int


def _chol_logdet(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def relative_entropy_gaussian(alt, nom):
    """R(alt | nom) for two Gaussian models of equal dimension."""
    d = alt.dimension
    if nom.dimension != d or alt.cov.shape != nom.cov.shape:
        raise DimensionError(f"dimension mismatch: {alt.dimension} vs {nom.dimension}")
    alt = factorize(alt)
    nom = factorize(nom)
    l_alt, l_nom = alt.chol, nom.chol

    logdet_nom = _chol_logdet(l_nom)
    logdet_alt = _chol_logdet(l_alt)
    # tr(S_nom^-1 S_alt) = ||L_nom^-1 L_alt||_F^2
    w = linalg.solve_triangular(l_nom, l_alt, lower=True)
    trace_term = float(np.sum(w * w))
    dm = linalg.solve_triangular(l_nom, alt.mean - nom.mean, lower=True)
    mahalanobis = float(dm @ dm)

    # the value itself comes from the spectrum of L_nom^-1 (S_alt - S_nom) L_nom^-T,
    # which avoids the cancellation between logdet and trace for nearby models
    diff = alt.cov - nom.cov
    diff[np.diag_indices(d)] += alt.jitter_used - nom.jitter_used
    e = linalg.solve_triangular(l_nom, diff, lower=True)
    e = linalg.solve_triangular(l_nom, e.T, lower=True)
    delta = linalg.eigvalsh(0.5 * (e + e.T))
    value = 0.5 * (float(np.sum(delta - np.log1p(delta))) + mahalanobis)
    return RelEntropyResult(
        value=value,
        logdet_terms=(logdet_nom, logdet_alt),
        trace_term=trace_term,
        mahalanobis_term=mahalanobis,
        dimension=d,
    )


def relative_entropy_params(grid, alt_params, nom_params):
    """Convenience wrapper building both models on ``grid``."""
    return relative_entropy_gaussian(
        build_covariance(grid, alt_params), build_covariance(grid, nom_params)
    ).value


def fim_gaussian(grid, params):
    """4x4 Fisher information of the log-field in ``(mu, sigma2, ell, tau2)``.

    Entry ``(i, j)`` is ``dmu_i' S^-1 dmu_j + tr(S^-1 dS_i S^-1 dS_j) / 2``.
    """
    model = build_covariance(grid, params)
    chol, jitter = cholesky_with_jitter(model.cov)
    cho = (chol, True)
    derivs = cov_derivatives(grid, params)

    mean_terms = []
    cov_terms = []
    for name in PARAM_NAMES:
        dmean, dcov = derivs[name]
        mean_terms.append((dmean, linalg.cho_solve(cho, dmean)))
        cov_terms.append(linalg.cho_solve(cho, dcov))

    k = len(PARAM_NAMES)
    fim = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            mean_part = float(mean_terms[i][0] @ mean_terms[j][1])
            # tr(A B) for A = S^-1 dS_i, B = S^-1 dS_j
            trace_part = 0.5 * float(np.sum(cov_terms[i] * cov_terms[j].T))
            fim[i, j] = fim[j, i] = mean_part + trace_part
    return fim


def screening_index(params, fim, direction_index):
    """J = theta_i * sqrt(FIM_ii)."""
    fim = np.asarray(fim, dtype=float)
    if fim.shape[0] != fim.shape[1] or not 0 <= direction_index < fim.shape[0]:
        raise ParameterError(f"invalid direction {direction_index} for FIM {fim.shape}")
    diag = fim[direction_index, direction_index]
    if diag < 0:
        warnings.warn(
            f"negative FIM diagonal {diag:.3g} for direction {direction_index}; clamped to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        diag = 0.0
    theta = params.as_array()[direction_index]
    return float(theta * np.sqrt(diag))
