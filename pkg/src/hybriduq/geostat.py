"""Permeability data, maximum likelihood fits and alternative-model families."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from ._rng import keyed_generator
from .errors import DataError, ExperimentError, FitError, HybridUQError, ParseError
from .grf import (
    Grid,
    HyperParams,
    build_covariance,
    cholesky_with_jitter,
    se_nugget_cov,
    standard_normal,
)
from .infodiv import relative_entropy_gaussian

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-10
ELL_FLOOR_FRACTION = 1e-6
MIN_POINTS = 4


@dataclass(frozen=True)
class DataSet:
    locations: np.ndarray
    log_values: np.ndarray
    label: str = ""

    def __post_init__(self):
        x = np.asarray(self.locations, dtype=float)
        y = np.asarray(self.log_values, dtype=float)
        object.__setattr__(self, "locations", x)
        object.__setattr__(self, "log_values", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise DataError(f"locations and values differ in shape: {x.shape} vs {y.shape}")
        if x.size < MIN_POINTS:
            raise DataError(f"data set needs at least {MIN_POINTS} points, got {x.size}")
        if not np.all(np.diff(x) > 0):
            raise DataError("locations must be strictly increasing")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DataError("data contain non-finite entries")

    def __len__(self):
        return self.locations.size

    @property
    def extent(self):
        return float(self.locations[-1] - self.locations[0])

    def take(self, indices, label=None):
        idx = np.sort(np.asarray(indices, dtype=int))
        return DataSet(self.locations[idx], self.log_values[idx], label or self.label)


@dataclass(frozen=True)
class FitResult:
    params: HyperParams
    neg_log_likelihood: float
    converged: bool
    iterations: int


def ingest_csv(source, label=None):
    """Read ``x,perm`` or ``x,logperm`` data from a path or a stream.

    Lines starting with ``#`` are comments. Raw permeabilities are logged.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _parse_csv(fh, label or os.path.basename(os.fspath(source)))
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8")
    return _parse_csv(source, label or "")


def _parse_csv(fh, label):
    header = None
    xs, vs = [], []
    for lineno, line in enumerate(fh, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped]))
        if header is None:
            header = [f.strip().lower() for f in fields]
            if header not in (["x", "perm"], ["x", "logperm"]):
                raise ParseError(
                    f"header must be 'x,perm' or 'x,logperm', got {stripped!r}", lineno
                )
            continue
        if len(fields) != 2:
            raise ParseError(f"expected 2 fields, got {len(fields)}", lineno)
        try:
            x, v = float(fields[0]), float(fields[1])
        except ValueError:
            raise ParseError(f"non-numeric row {stripped!r}", lineno) from None
        if header[1] == "perm":
            if not v > 0:
                raise ParseError(f"permeability must be positive, got {v}", lineno)
            v = math.log(v)
        xs.append(x)
        vs.append(v)
    if header is None:
        raise ParseError("missing header line")
    return DataSet(np.array(xs), np.array(vs), label)


def write_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "logperm"])
        for x, v in zip(data.locations, data.log_values):
            w.writerow([repr(float(x)), repr(float(v))])


def neg_log_likelihood(data, params):
    """Gaussian negative log-likelihood of the log-data."""
    cov = se_nugget_cov(data.locations, params)
    chol, _ = cholesky_with_jitter(cov)
    r = data.log_values - params.mu
    w = linalg.solve_triangular(chol, r, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(0.5 * (logdet + w @ w + len(data) * math.log(2.0 * math.pi)))


def default_init(data):
    var = float(np.var(data.log_values))
    half = max(0.5 * var, VARIANCE_FLOOR)
    return HyperParams(float(np.mean(data.log_values)), half, 0.1 * data.extent, half)


def _to_params(z, ell_floor):
    return HyperParams(
        float(z[0]),
        max(math.exp(z[1]), VARIANCE_FLOOR),
        max(math.exp(z[2]), ell_floor),
        max(math.exp(z[3]), VARIANCE_FLOOR),
    )


def fit_mle(data, init=None, max_iter=500, restarts=2):
    """Nelder-Mead fit over ``(mu, log sigma2, log ell, log tau2)``.

    The search restarts from the best vertex while that still improves the
    objective, at most ``restarts`` extra times.
    """
    init = init or default_init(data)
    ell_floor = ELL_FLOOR_FRACTION * data.extent
    z = np.array(
        [
            init.mu,
            math.log(max(init.sigma2, VARIANCE_FLOOR)),
            math.log(max(init.ell, ell_floor)),
            math.log(max(init.tau2, VARIANCE_FLOOR)),
        ]
    )
    failures = 0

    def objective(z):
        nonlocal failures
        if not np.all(np.isfinite(z)) or np.any(np.abs(z[1:]) > 700):
            return np.inf
        try:
            return neg_log_likelihood(data, _to_params(z, ell_floor))
        except HybridUQError:
            failures += 1
            return np.inf

    total_iter = 0
    best = None
    for attempt in range(restarts + 1):
        res = optimize.minimize(
            objective,
            z,
            method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": max_iter, "adaptive": True},
        )
        total_iter += int(res.nit)
        if best is not None and not res.fun < best.fun - 1e-10:
            break
        best = res
        z = res.x
    if not np.isfinite(best.fun):
        raise FitError(f"all likelihood evaluations failed ({failures} factorization failures)")
    params = _to_params(best.x, ell_floor)
    return FitResult(
        params=params,
        neg_log_likelihood=neg_log_likelihood(data, params),
        converged=bool(best.success),
        iterations=total_iter,
    )


def _count(fraction, total):
    return int(math.floor(fraction * total + 0.5))


def subsample(data, fraction, seed, draw=0):
    """Uniform draw without replacement of ``round(fraction * N)`` points."""
    if not 0 < fraction <= 1:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    k = _count(fraction, len(data))
    if k < MIN_POINTS:
        raise DataError(f"subsample of {k} points is too small")
    if k == len(data):
        return data
    idx = keyed_generator(seed, 1, draw).choice(len(data), size=k, replace=False)
    return data.take(idx, label=f"{data.label}[{fraction:g}]")


def _membership(sub, full):
    idx = np.searchsorted(full.locations, sub.locations)
    idx = np.clip(idx, 0, len(full) - 1)
    if not np.all(full.locations[idx] == sub.locations):
        raise DataError("base data set is not a subset of the full data set")
    return idx


def enlarge(base, full, fraction_step, seed, draw=0):
    """Add ``round(fraction_step * N_full)`` points of ``full`` not in ``base``.

    ``draw`` indexes independent enlargements from the same seed.
    """
    inside = _membership(base, full)
    remaining = np.setdiff1d(np.arange(len(full)), inside)
    k = _count(fraction_step, len(full))
    if k > remaining.size:
        raise DataError(f"cannot add {k} points, only {remaining.size} remain")
    added = keyed_generator(seed, 2, draw).choice(remaining, size=k, replace=False)
    return full.take(np.concatenate([inside, added]), label=base.label)


def shrink(base, full, fraction_step, seed, draw=0):
    """Remove ``round(fraction_step * N_full)`` points of ``base`` uniformly."""
    k = _count(fraction_step, len(full))
    if len(base) - k < MIN_POINTS:
        raise DataError(f"removing {k} of {len(base)} points leaves too few")
    keep = keyed_generator(seed, 3, draw).choice(len(base), size=len(base) - k, replace=False)
    return base.take(keep)


def synthetic_dataset(params, n_points, extent=1.0, seed=0, label="synthetic"):
    """Log-data sampled from ``params`` at ``n_points`` equispaced locations."""
    x = np.linspace(0.0, extent, n_points)
    chol, _ = cholesky_with_jitter(se_nugget_cov(x, params))
    y = params.mu + chol @ standard_normal((seed, 7), n_points)
    return DataSet(x, y, label)


def data_grid(data, n):
    """Solver grid of ``n`` cells spanning the data extent."""
    return Grid(n, float(data.locations[0]), float(data.locations[-1]))


@dataclass
class REDistribution:
    """Relative entropies of alternative fits against one nominal fit."""

    entries: list
    failures: int
    selections: dict = field(default_factory=dict)

    @property
    def values(self):
        return np.array([e[0] for e in self.entries])

    def histogram(self, bins=20):
        counts, edges = np.histogram(self.values, bins=bins)
        return counts, edges


def _select(values):
    order = {
        "max": int(np.argmax(values)),
        "min": int(np.argmin(values)),
        "mean": int(np.argmin(np.abs(values - values.mean()))),
        "median": int(np.argmin(np.abs(values - np.median(values)))),
    }
    return order


def re_distribution(
    nominal_fit, full, base, count, grid, seed, fraction_step=0.1, init=None, max_iter=500
):
    """Fit ``count`` enlargements of ``base`` and measure R(alt | nominal) on ``grid``."""
    if count < 1:
        raise ExperimentError("count must be at least 1")
    nominal = build_covariance(grid, nominal_fit.params)
    entries = []
    failures = 0
    for k in range(count):
        try:
            data = enlarge(base, full, fraction_step, seed, draw=k)
            fit = fit_mle(data, init=init, max_iter=max_iter)
            rho = relative_entropy_gaussian(build_covariance(grid, fit.params), nominal).value
        except HybridUQError as exc:
            log.info("alternative %d failed: %s", k, exc)
            failures += 1
            continue
        entries.append((max(rho, 0.0), fit))
    if failures * 2 > count:
        raise ExperimentError(f"{failures} of {count} alternative fits failed")
    values = np.array([e[0] for e in entries])
    return REDistribution(entries, failures, _select(values))
