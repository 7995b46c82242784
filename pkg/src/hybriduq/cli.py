"""Command-line front end: ``uq screen|sensitivity|misspec|worstcase|concentration``."""

from __future__ import annotations

import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import click
import numpy as np

from . import __version__, config as cfgmod, geostat
from .errors import ConfigError, HybridUQError
from .grf import PARAM_NAMES, HyperParams, build_covariance, factorize
from .infodiv import fim_gaussian, relative_entropy_gaussian, screening_index
from .mcengine import (
    GoalFunctional,
    envelope,
    epsilon_for_budget,
    sensitivity_experiment,
    simulate,
    worker_count,
)
from .report import ExperimentReport, emit, timestamp

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 2, 3, 4

# stream ids for the data experiments; sensitivity uses 0 and 1..
CALIBRATION_STREAM = 1 << 20
SELECTION_KINDS = ("max", "min", "mean", "median")


def _metadata(cfg, experiment, **extra):
    meta = {
        "experiment": experiment,
        "seed": cfg.run.seed,
        "version": __version__,
        "timestamp": timestamp(),
        "config": cfg.echo(),
    }
    meta.update(extra)
    return meta


def cmd_screen(cfg):
    """Screening indices for the configured nominal model(s); FIM only."""
    base = cfg.run.nominal
    ells = cfg.screen_ell or (base.ell,)
    taus = cfg.screen_tau2 or (base.tau2,)
    grid = cfg.run.grid
    rows = []
    for ell in ells:
        for tau2 in taus:
            params = HyperParams(base.mu, base.sigma2, ell, tau2)
            fim = fim_gaussian(grid, params)
            for i, name in enumerate(PARAM_NAMES):
                rows.append(
                    {
                        **params.to_dict(),
                        "direction": name,
                        "J": screening_index(params, fim, i),
                        "fim_ii": float(fim[i, i]),
                    }
                )
    return ExperimentReport("screen", rows, _metadata(cfg, "screen", pde_solves=0))


def _epsilons(cfg, direction):
    if cfg.eps is not None:
        if isinstance(cfg.eps, tuple) and cfg.eps and isinstance(cfg.eps[0], tuple):
            return list(dict(cfg.eps).get(direction, ()))
        return list(cfg.eps)
    idx = PARAM_NAMES.index(direction)
    return [epsilon_for_budget(cfg.run.grid, cfg.run.nominal, idx, rho) for rho in cfg.rho]


def cmd_sensitivity(cfg, experiment="sensitivity"):
    """Bounds versus finite-difference weak errors along each configured direction."""
    concentration = experiment == "concentration" or cfg.use_concentration
    rows = []
    for direction in cfg.directions:
        eps = _epsilons(cfg, direction)
        if not eps:
            continue
        result = sensitivity_experiment(
            cfg.run,
            direction,
            eps,
            use_concentration=concentration,
            with_estimator_variance=experiment == "concentration",
        )
        rows.extend(result.rows())
    return ExperimentReport(experiment, rows, _metadata(cfg, experiment))


def cmd_concentration(cfg):
    """Sensitivity experiment with the Bennett envelopes and estimator variances."""
    return cmd_sensitivity(cfg, experiment="concentration")


# ---- data experiments ----------------------------------------------------


def load_data(cfg):
    if cfg.data_path:
        return geostat.ingest_csv(cfg.data_path)
    return geostat.synthetic_dataset(
        cfg.truth, cfg.data_points, cfg.data_extent, seed=cfg.data_seed, label="synthetic"
    )


def data_run_config(cfg, data):
    return replace(
        cfg.run, x_lo=float(data.locations[0]), x_hi=float(data.locations[-1])
    )


def data_goals(u):
    """Goal functionals calibrated on nominal outlet values ``u``."""
    m = float(np.mean(u))
    s = float(np.std(u, ddof=1))
    return (
        GoalFunctional("threshold_indicator", threshold=m, name="g1"),
        GoalFunctional("interval_indicator", interval=(m - s, m + s), name="g2"),
        GoalFunctional("scaled_value", scale=m, lower=0.0, name="g3"),
    )


def calibrate(model, run_cfg):
    """Dedicated pass of ``M`` nominal samples fixing ``m`` and ``s``."""
    u = simulate(model, run_cfg, run_index=0, stream=CALIBRATION_STREAM)[:, 0]
    return data_goals(u)


def _fit_all(datasets, run_cfg):
    workers = worker_count(run_cfg)
    if workers == 1:
        return [geostat.fit_mle(d) for d in datasets]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(geostat.fit_mle, datasets))


def misspec_chain(full, nominal_data, nominal_fraction, fractions, seed):
    """Data sets for each fraction, grown or thinned one step at a time from the nominal."""
    out = {}
    up = sorted(q for q in fractions if q > nominal_fraction)
    down = sorted((q for q in fractions if q < nominal_fraction), reverse=True)
    for chain, grow in ((up, True), (down, False)):
        data, prev = nominal_data, nominal_fraction
        for k, q in enumerate(chain):
            step = abs(q - prev)
            if grow:
                data = geostat.enlarge(data, full, step, seed, draw=k)
            else:
                data = geostat.shrink(data, full, step, seed, draw=k)
            out[q] = data
            prev = q
    return out


def _quartiles(x):
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return float(q1), float(med), float(q3)


def _envelope_cells(nom_samples, u_alt, goal, rho):
    bound = envelope(nom_samples, rho, "sampled")
    fd = float(np.mean(goal(u_alt))) - nom_samples.mean
    return bound, fd


def cmd_misspec(cfg):
    """Bounds for alternatives fitted to grown or thinned copies of the nominal data."""
    full = load_data(cfg)
    run_cfg = data_run_config(cfg, full)
    grid = run_cfg.grid
    seed = cfg.run.seed
    nominal_data = geostat.subsample(full, cfg.misspec_nominal, seed)
    nominal_fit = geostat.fit_mle(nominal_data)
    nominal = factorize(build_covariance(grid, nominal_fit.params))
    goals = calibrate(nominal, run_cfg)

    chain = misspec_chain(full, nominal_data, cfg.misspec_nominal, cfg.misspec_fractions, seed)
    qs = sorted(chain)
    fits = dict(zip(qs, _fit_all([chain[q] for q in qs], run_cfg)))
    models = {}
    for q in sorted(cfg.misspec_fractions):
        if q in fits:
            alt = factorize(build_covariance(grid, fits[q].params))
            rho = max(relative_entropy_gaussian(alt, nominal).value, 0.0)
        else:
            alt, rho = nominal, 0.0
        models[q] = (alt, rho, q not in fits)

    cells = {(g.label, q): [] for g in goals for q in models}
    for run in range(run_cfg.runs):
        u_nom = simulate(nominal, run_cfg, run, stream=0)[:, 0]
        nom_samples = {g.label: g.observable(u_nom) for g in goals}
        for k, (q, (alt, rho, is_nominal)) in enumerate(models.items()):
            u_alt = u_nom if is_nominal else simulate(alt, run_cfg, run, stream=1 + k)[:, 0]
            for g in goals:
                bound, fd = _envelope_cells(nom_samples[g.label], u_alt, g, rho)
                cells[(g.label, q)].append((bound.xi_minus, bound.xi_plus, fd))

    rows = []
    for (goal, q), vals in cells.items():
        arr = np.array(vals)
        lo, hi, fd = arr[:, 0], arr[:, 1], arr[:, 2]
        row = {"goal": goal, "q": q, "method": "sampled", "re": models[q][1]}
        for name, x in (("xi_minus", lo), ("xi_plus", hi), ("fd", fd)):
            row[f"{name}_q1"], row[f"{name}_median"], row[f"{name}_q3"] = _quartiles(x)
        row["containment"] = float(np.mean((lo <= fd) & (fd <= hi)))
        row["runs"] = len(vals)
        rows.append(row)
    meta = _metadata(
        cfg,
        "misspec",
        nominal_fit=nominal_fit.params.to_dict(),
        data_points=len(full),
        goal_thresholds={g.label: _goal_echo(g) for g in goals},
    )
    return ExperimentReport("misspec", rows, meta)


def _goal_echo(goal):
    return {
        k: v
        for k, v in (
            ("threshold", goal.threshold),
            ("interval", goal.interval),
            ("scale", goal.scale),
        )
        if v is not None
    }


def worstcase_nominal(cfg, full, index, count=None):
    """Nominal fit, relative-entropy distribution and selected alternatives for one subsample."""
    run_cfg = data_run_config(cfg, full)
    grid = run_cfg.grid
    seed = cfg.run.seed
    base = geostat.subsample(full, cfg.worst_nominal, seed, draw=index)
    nominal_fit = geostat.fit_mle(base)
    dist = geostat.re_distribution(
        nominal_fit,
        full,
        base,
        count or cfg.worst_count,
        grid,
        seed=seed * 1009 + index,
        fraction_step=cfg.worst_step,
    )
    return nominal_fit, dist


def worstcase_cells(cfg, full, nominal_fit, dist, index):
    """Per-run bounds at the max-RE budget and weak errors of the selected alternatives."""
    run_cfg = data_run_config(cfg, full)
    grid = run_cfg.grid
    nominal = factorize(build_covariance(grid, nominal_fit.params))
    goals = calibrate(nominal, run_cfg)
    budget = float(dist.values.max())
    selected = {
        kind: factorize(build_covariance(grid, dist.entries[i][1].params))
        for kind, i in dist.selections.items()
    }
    out = []
    for run in range(run_cfg.runs):
        u_nom = simulate(nominal, run_cfg, run, stream=0)[:, 0]
        nom_samples = {g.label: g.observable(u_nom) for g in goals}
        bounds = {g.label: envelope(nom_samples[g.label], budget, "sampled") for g in goals}
        for k, kind in enumerate(SELECTION_KINDS):
            re_k = dist.entries[dist.selections[kind]][0]
            u_alt = simulate(selected[kind], run_cfg, run, stream=1 + 16 * index + k)[:, 0]
            for g in goals:
                fd = float(np.mean(g(u_alt))) - nom_samples[g.label].mean
                out.append((kind, g.label, run, re_k, budget, bounds[g.label], fd))
    return out


def cmd_worstcase(cfg):
    """Training-set relative-entropy distributions and worst-case envelopes."""
    full = load_data(cfg)
    rows = []
    failures = {}
    for index in range(cfg.worst_nominals):
        nominal_fit, dist = worstcase_nominal(cfg, full, index)
        failures[f"P{index + 1}"] = dist.failures
        counts, edges = dist.histogram()
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            rows.append(
                {
                    "nominal": f"P{index + 1}",
                    "kind": "histogram",
                    "bin_lo": float(lo),
                    "bin_hi": float(hi),
                    "count": int(c),
                }
            )
        cells = worstcase_cells(cfg, full, nominal_fit, dist, index)
        for kind in SELECTION_KINDS:
            for g in sorted({c[1] for c in cells}):
                sub = [c for c in cells if c[0] == kind and c[1] == g]
                fd = np.array([c[6] for c in sub])
                lo = np.array([c[5].xi_minus for c in sub])
                hi = np.array([c[5].xi_plus for c in sub])
                rows.append(
                    {
                        "nominal": f"P{index + 1}",
                        "kind": "bound",
                        "selection": kind,
                        "goal": g,
                        "method": "sampled",
                        "re": sub[0][3],
                        "budget": sub[0][4],
                        "xi_minus": float(lo.mean()),
                        "xi_plus": float(hi.mean()),
                        "fd_mean": float(fd.mean()),
                        "fd_sd": float(np.std(fd, ddof=1)) if fd.size > 1 else 0.0,
                        "contained": float(np.mean((lo <= fd) & (fd <= hi))),
                    }
                )
    meta = _metadata(cfg, "worstcase", fit_failures=failures, data_points=len(full))
    return ExperimentReport("worstcase", rows, meta)


COMMANDS = {
    "screen": cmd_screen,
    "sensitivity": cmd_sensitivity,
    "misspec": cmd_misspec,
    "worstcase": cmd_worstcase,
    "concentration": cmd_concentration,
}


# ---- click wiring --------------------------------------------------------


def _run(name, config_path, seed, fmt, out, use_concentration, runs, samples):
    try:
        cfg = cfgmod.load(config_path).with_overrides(
            seed=seed, runs=runs, samples=samples, use_concentration=use_concentration
        )
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except OSError as exc:
        click.echo(f"cannot read config: {exc}", err=True)
        sys.exit(EXIT_IO)
    try:
        report = COMMANDS[name](cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except HybridUQError as exc:
        click.echo(f"computation failed: {exc}", err=True)
        sys.exit(EXIT_COMPUTE)
    try:
        emit(report, fmt, out)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)


def _common(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="JSON config file (defaults apply to missing fields)."),
        click.option("--seed", type=int, default=None, help="Override run.seed."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                     show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="Output file; stdout when omitted."),
        click.option("--use-concentration", is_flag=True,
                     help="Add Bennett envelopes for goals bounded above."),
        click.option("--runs", type=click.IntRange(min=1), default=None, help="Override run.runs."),
        click.option("--samples", type=click.IntRange(min=2), default=None,
                     help="Override run.M."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="uq")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Information-theoretic sensitivity bounds for groundwater flow models."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)


def _register(name, help_text):
    @main.command(name=name, help=help_text)
    @_common
    def command(config_path, seed, fmt, out, use_concentration, runs, samples):
        _run(name, config_path, seed, fmt, out, use_concentration, runs, samples)

    return command


_register("screen", "Sampling-free screening indices J for each parameter.")
_register("sensitivity", "Divergence bounds against finite-difference weak errors.")
_register("misspec", "Bounds for models fitted to perturbed data subsets.")
_register("worstcase", "Relative-entropy training sets and worst-case envelopes.")
_register("concentration", "Sensitivity with Bennett envelopes and estimator variances.")


if __name__ == "__main__":
    main()
