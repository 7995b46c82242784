"""Monte Carlo pipeline: sample conductivity, solve, evaluate goal functionals.

Sample ``k`` of run ``r`` in random stream ``s`` is generated from the key
``(seed, s, r, k)``. Samples are processed in fixed-size chunks, so the
result does not depend on how many workers evaluate the chunks.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fem1d
from .errors import ComputationError, HybridUQError, ParameterError
from .grf import PARAM_NAMES, Grid, HyperParams, build_covariance, factorize, standard_normal
from .infodiv import (
    ObservableSamples,
    concentration_xi,
    divergence_bound,
    estimator_variance,
    fim_gaussian,
    relative_entropy_gaussian,
    screening_index,
    xi_bound,
)
from .infodiv.bounds import DivergenceBound

log = logging.getLogger(__name__)

CHUNK = 256

GOAL_KINDS = ("threshold_indicator", "interval_indicator", "clipped_value", "scaled_value")


@dataclass(frozen=True)
class GoalFunctional:
    """Scalar functional of the solution value at ``eval_point``."""

    kind: str
    eval_point: float = 1.0
    threshold: float | None = None
    interval: tuple | None = None
    cutoff: float | None = None
    scale: float | None = None
    lower: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in GOAL_KINDS:
            raise ParameterError(f"unknown goal kind {self.kind!r}")
        required = {
            "threshold_indicator": "threshold",
            "interval_indicator": "interval",
            "clipped_value": "cutoff",
            "scaled_value": "scale",
        }[self.kind]
        if getattr(self, required) is None:
            raise ParameterError(f"{self.kind} goal needs {required!r}")
        if self.kind == "interval_indicator" and not self.interval[0] < self.interval[1]:
            raise ParameterError(f"empty interval {self.interval}")
        if self.kind == "scaled_value" and self.scale == 0:
            raise ParameterError("scale must be nonzero")

    @property
    def label(self):
        return self.name or self.kind

    @property
    def bounds(self):
        """Declared ``(lower, upper)`` range of the functional."""
        if self.kind in ("threshold_indicator", "interval_indicator"):
            return 0.0, 1.0
        if self.kind == "clipped_value":
            return self.lower, self.cutoff
        return self.lower, None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "threshold_indicator":
            return (u > self.threshold).astype(float)
        if self.kind == "interval_indicator":
            lo, hi = self.interval
            return ((u > lo) & (u < hi)).astype(float)
        if self.kind == "clipped_value":
            return np.minimum(u, self.cutoff)
        return u / self.scale

    def observable(self, u):
        lower, upper = self.bounds
        return ObservableSamples.from_values(self(u), upper_bound=upper, lower_bound=lower)


@dataclass(frozen=True)
class RunConfig:
    M: int = 1000
    runs: int = 1
    seed: int = 0
    n: int = 64
    mesh_multiplier: int = 2
    nominal: HyperParams = field(default_factory=lambda: HyperParams(0.8, 4.0, 0.005, 0.045))
    goals: tuple = ()
    x_lo: float = 0.0
    x_hi: float = 1.0
    flux: float = 1.0
    workers: int | None = None

    def __post_init__(self):
        if self.M < 2:
            raise ParameterError(f"M must be at least 2, got {self.M}")
        if self.runs < 1:
            raise ParameterError(f"runs must be at least 1, got {self.runs}")
        if self.n < 2:
            raise ParameterError(f"n must be at least 2, got {self.n}")
        if self.mesh_multiplier < 1:
            raise ParameterError("mesh multiplier must be a positive integer")

    @property
    def grid(self):
        return Grid(self.n, self.x_lo, self.x_hi)

    @property
    def mesh(self):
        return fem1d.Mesh(self.n * self.mesh_multiplier, self.x_lo, self.x_hi)


def worker_count(config=None):
    if config is not None and config.workers:
        return max(1, int(config.workers))
    env = os.environ.get("UQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer UQ_THREADS=%r", env)
    return 1


def _solve_chunk(model, config, run_index, stream, indices, points):
    mesh = config.mesh
    z = np.empty((len(indices), model.dimension))
    for row, k in enumerate(indices):
        z[row] = standard_normal((config.seed, stream, run_index, k), model.dimension)
    log_values = model.mean + z @ model.chol.T
    a = fem1d.project_conductivity(np.exp(log_values), mesh)
    try:
        u = fem1d.solve_batch(a, mesh, config.flux)
    except HybridUQError as exc:
        raise ComputationError(
            f"solver failed in run {run_index}, samples {indices[0]}..{indices[-1]}: {exc}"
        ) from exc
    return np.stack([fem1d.evaluate_nodal(u, mesh, x) for x in points], axis=-1)


def simulate(model, config, run_index=0, stream=0, points=None):
    """Solution values at ``points`` for the ``M`` samples of one run.

    Returns an array of shape ``(M, len(points))``.
    """
    model = factorize(model)
    points = (config.x_hi,) if points is None else tuple(points)
    chunks = [range(s, min(s + CHUNK, config.M)) for s in range(0, config.M, CHUNK)]
    workers = worker_count(config)
    if workers == 1 or len(chunks) == 1:
        parts = [_solve_chunk(model, config, run_index, stream, c, points) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda c: _solve_chunk(model, config, run_index, stream, c, points), chunks)
            )
    return np.concatenate(parts, axis=0)


def sample_observable(model, goal, config, run_index=0, stream=0):
    """``M`` draws of the goal functional under ``model``."""
    u = simulate(model, config, run_index, stream, (goal.eval_point,))[:, 0]
    return goal.observable(u)


def eval_points(goals):
    return tuple(sorted({g.eval_point for g in goals}))


def goal_values(u_by_point, points, goal):
    return u_by_point[:, points.index(goal.eval_point)]


def weak_error_fd(
    nominal, alternative, goal, config, scale=1.0, run_index=0, common_random_numbers=False
):
    """``scale * (mean_alt - mean_nom)`` from ``M`` samples of each model."""
    nom = sample_observable(nominal, goal, config, run_index, stream=0)
    alt_stream = 0 if common_random_numbers else 1
    alt = sample_observable(alternative, goal, config, run_index, stream=alt_stream)
    return scale * (alt.mean - nom.mean)


def epsilon_for_budget(grid, params, direction, rho, eps_hi=None):
    """Positive step along ``direction`` whose relative entropy equals ``rho``."""
    from scipy.optimize import brentq

    nominal = build_covariance(grid, params)
    theta = abs(params.as_array()[direction]) or 1.0

    def excess(eps):
        alt = build_covariance(grid, params.perturbed(direction, eps))
        return relative_entropy_gaussian(alt, nominal).value - rho

    hi = eps_hi or 0.01 * theta
    for _ in range(200):
        if excess(hi) > 0:
            break
        hi *= 2.0
    else:
        raise ComputationError(f"relative entropy never reaches {rho} along {direction}")
    return brentq(excess, 0.0, hi, xtol=1e-14 * theta, rtol=1e-12)


@dataclass
class SensitivityCell:
    """One (goal, epsilon, run) evaluation."""

    goal: str
    direction: str
    eps: float
    run: int
    rho: float
    weak_error: float
    bounds: dict
    estimator_variance: float | None = None

    def contained(self, method="sampled"):
        return self.bounds[method].contains(self.weak_error)


@dataclass
class SensitivityResult:
    config: RunConfig
    direction: str
    epsilons: list
    cells: list

    def containment(self, method="sampled", goals=None):
        cells = [c for c in self.cells if goals is None or c.goal in goals]
        if not cells:
            return float("nan")
        return float(np.mean([c.contained(method) for c in cells]))

    def rows(self):
        """Per-(goal, eps, method) summaries over runs, scaled by ``theta_i / eps``."""
        idx = PARAM_NAMES.index(self.direction)
        theta = self.config.nominal.as_array()[idx]
        out = []
        keys = []
        for c in self.cells:
            for method in c.bounds:
                key = (c.goal, c.eps, method)
                if key not in keys:
                    keys.append(key)
        for goal, eps, method in keys:
            cells = [c for c in self.cells if c.goal == goal and c.eps == eps]
            scale = theta / eps
            lo = np.array([c.bounds[method].xi_minus for c in cells]) * scale
            hi = np.array([c.bounds[method].xi_plus for c in cells]) * scale
            fd = np.array([c.weak_error for c in cells]) * scale
            inside = np.mean([c.contained(method) for c in cells])
            out.append(
                {
                    "goal": goal,
                    "direction": self.direction,
                    "eps": eps,
                    "method": method,
                    "re": cells[0].rho,
                    "xi_minus": float(lo.mean()),
                    "xi_minus_sd": _sd(lo),
                    "xi_plus": float(hi.mean()),
                    "xi_plus_sd": _sd(hi),
                    "fd_mean": float(fd.mean()),
                    "fd_sd": _sd(fd),
                    "c_star_plus": float(np.mean([c.bounds[method].c_star_plus for c in cells])),
                    "containment": float(inside),
                    "runs": len(cells),
                }
            )
            est = [c.estimator_variance for c in cells if c.estimator_variance is not None]
            if method == "sampled" and est:
                # variance of the unscaled estimator, averaged over runs
                out[-1]["estimator_variance"] = float(np.mean(est))
        return out


def _sd(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def bound_methods(goal, use_concentration):
    methods = ["sampled"]
    if use_concentration:
        lower, upper = goal.bounds
        if upper is not None:
            methods.append("bennett")
        if lower is not None and upper is not None:
            methods.append("bennett_ab")
    return methods


def envelope(samples, rho, method):
    """Both bound sides; the Bennett lower side needs a lower bound on H."""
    if method == "bennett" and samples.lower_bound is None:
        lower = xi_bound(samples, rho, -1)
        upper = concentration_xi(samples, rho, "bennett", 1)
        return DivergenceBound.from_sides(lower, upper)
    return divergence_bound(samples, rho, method)


def sensitivity_experiment(
    config,
    direction,
    epsilons,
    use_concentration=False,
    budget_override=None,
    stream_offset=0,
    with_estimator_variance=False,
):
    """Sensitivity bounds versus finite-difference weak errors along one direction.

    ``budget_override`` fixes the relative entropy used in the bounds (to test
    a family of alternatives against a larger information budget); by default
    each perturbation's own relative entropy is used. Nominal samples of each
    run are shared across all epsilons.
    """
    if isinstance(direction, str):
        if direction not in PARAM_NAMES:
            raise ParameterError(f"unknown direction {direction!r}")
        d_index = PARAM_NAMES.index(direction)
    else:
        d_index = int(direction)
        direction = PARAM_NAMES[d_index]
    epsilons = [float(e) for e in epsilons]
    if any(not e > 0 for e in epsilons):
        raise ParameterError("epsilons must be positive")
    goals = tuple(config.goals)
    if not goals:
        raise ParameterError("at least one goal functional is required")

    grid = config.grid
    nominal = factorize(build_covariance(grid, config.nominal))
    alternatives = []
    for eps in epsilons:
        alt = factorize(build_covariance(grid, config.nominal.perturbed(d_index, eps)))
        rho = relative_entropy_gaussian(alt, nominal).value
        alternatives.append((eps, alt, max(rho, 0.0)))

    points = eval_points(goals)
    cells = []
    for run in range(config.runs):
        u_nom = simulate(nominal, config, run, stream=0, points=points)
        nominal_samples = {g.label: g.observable(goal_values(u_nom, points, g)) for g in goals}
        for j, (eps, alt, rho) in enumerate(alternatives):
            budget = rho if budget_override is None else budget_override
            stream = 1 + stream_offset + 64 * d_index + j
            u_alt = simulate(alt, config, run, stream=stream, points=points)
            for g in goals:
                nom_s = nominal_samples[g.label]
                alt_mean = float(np.mean(g(goal_values(u_alt, points, g))))
                bounds = {
                    m: envelope(nom_s, budget, m) for m in bound_methods(g, use_concentration)
                }
                est = None
                if with_estimator_variance and nom_s.population_variance > 0:
                    est = estimator_variance(nom_s, bounds["sampled"].c_star_plus, config.M)
                cells.append(
                    SensitivityCell(
                        goal=g.label,
                        direction=direction,
                        eps=eps,
                        run=run,
                        rho=budget,
                        weak_error=alt_mean - nom_s.mean,
                        bounds=bounds,
                        estimator_variance=est,
                    )
                )
    return SensitivityResult(config, direction, epsilons, cells)


def screening_report(config, goal=None):
    """Screening index for each principal direction; no PDE solves."""
    fim = fim_gaussian(config.grid, config.nominal)
    return {
        name: screening_index(config.nominal, fim, i) for i, name in enumerate(PARAM_NAMES)
    }
