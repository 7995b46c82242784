"""Relative entropy, Fisher information and hybrid divergence bounds."""

from .bounds import (
    METHODS,
    DivergenceBound,
    ObservableSamples,
    SideBound,
    bennett_ab_bound,
    bennett_bound,
    concentration_xi,
    cumulant_estimator,
    divergence_bound,
    estimator_variance,
    failure_prob_interval,
    optimal_c_init,
    xi_bound,
    xi_from_cgf,
    xi_linearized,
)
from .entropy import (
    RelEntropyResult,
    fim_gaussian,
    relative_entropy_gaussian,
    relative_entropy_params,
    screening_index,
)
from .optimize import DiscreteCGF, minimize_xi

__all__ = [
    "METHODS",
    "DiscreteCGF",
    "DivergenceBound",
    "ObservableSamples",
    "RelEntropyResult",
    "SideBound",
    "bennett_ab_bound",
    "bennett_bound",
    "concentration_xi",
    "cumulant_estimator",
    "divergence_bound",
    "estimator_variance",
    "failure_prob_interval",
    "fim_gaussian",
    "minimize_xi",
    "optimal_c_init",
    "relative_entropy_gaussian",
    "relative_entropy_params",
    "screening_index",
    "xi_bound",
    "xi_from_cgf",
    "xi_linearized",
]
