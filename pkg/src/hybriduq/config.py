"""Experiment configuration: one JSON document, validated with field paths."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .errors import ConfigError, HybridUQError
from .grf import PARAM_NAMES, HyperParams
from .mcengine import GoalFunctional, RunConfig

DEFAULTS = {
    "run": {
        "M": 1000,
        "runs": 20,
        "seed": 0,
        "n": 64,
        "mesh_multiplier": 2,
        "flux": 1.0,
        "x_lo": 0.0,
        "x_hi": 1.0,
        "workers": None,
    },
    "nominal": {"mu": 0.8, "sigma2": 4.0, "ell": 0.005, "tau2": 0.045},
    "goals": [
        {"name": "g1", "kind": "threshold_indicator", "threshold": 1.2},
        {"name": "g2", "kind": "interval_indicator", "interval": [0.25, 0.75]},
        {"name": "g3", "kind": "clipped_value", "cutoff": 3.0, "lower": 0.0},
    ],
    "screen": {"ell": [], "tau2": []},
    "sensitivity": {
        "directions": ["ell", "tau2"],
        "rho": [1e-3, 1e-2, 1e-1],
        "eps": None,
        "use_concentration": False,
    },
    "data": {
        "path": None,
        "n_points": 200,
        "extent": 1.0,
        "seed": 0,
        "truth": {"mu": 1.0, "sigma2": 1.0, "ell": 0.02, "tau2": 0.1},
    },
    "misspec": {"nominal_fraction": 0.5, "fractions": [0.1 * k for k in range(1, 11)]},
    "worstcase": {"nominal_fraction": 0.7, "step": 0.1, "count": 20, "nominals": 3},
}
DEFAULTS["misspec"]["fractions"] = [round(q, 10) for q in DEFAULTS["misspec"]["fractions"]]


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown field {where!r}")
        if isinstance(base[key], dict) and key != "nominal":
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _number(doc, path, kind=float, positive=False, allow_none=False):
    node = doc
    for part in path.split("."):
        node = node[part]
    if node is None and allow_none:
        return None
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"{path} must be a number, got {node!r}")
    if kind is int and node != int(node):
        raise ConfigError(f"{path} must be an integer, got {node!r}")
    value = kind(node)
    if positive and not value > 0:
        raise ConfigError(f"{path} must be positive, got {node!r}")
    return value


def _params(raw, path):
    if not isinstance(raw, dict) or set(raw) != set(PARAM_NAMES):
        raise ConfigError(f"{path} needs exactly the fields {', '.join(PARAM_NAMES)}")
    try:
        return HyperParams(*(float(raw[k]) for k in PARAM_NAMES))
    except (TypeError, ValueError, HybridUQError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _goal(raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must be an object")
    fields = dict(raw)
    if "interval" in fields and fields["interval"] is not None:
        fields["interval"] = tuple(fields["interval"])
    try:
        return GoalFunctional(**fields)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except HybridUQError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Config:
    run: RunConfig
    screen_ell: tuple = ()
    screen_tau2: tuple = ()
    directions: tuple = ("ell", "tau2")
    rho: tuple = ()
    eps: tuple | None = None
    use_concentration: bool = False
    data_path: str | None = None
    data_points: int = 200
    data_extent: float = 1.0
    data_seed: int = 0
    truth: HyperParams = field(default_factory=lambda: HyperParams(1.0, 1.0, 0.02, 0.1))
    misspec_nominal: float = 0.5
    misspec_fractions: tuple = ()
    worst_nominal: float = 0.7
    worst_step: float = 0.1
    worst_count: int = 20
    worst_nominals: int = 3
    raw: dict = field(default_factory=dict, compare=False)

    def with_overrides(self, seed=None, runs=None, samples=None, use_concentration=None):
        doc = copy.deepcopy(self.raw)
        if seed is not None:
            doc["run"]["seed"] = seed
        if runs is not None:
            doc["run"]["runs"] = runs
        if samples is not None:
            doc["run"]["M"] = samples
        if use_concentration:
            doc["sensitivity"]["use_concentration"] = True
        return from_dict(doc)

    def echo(self):
        return copy.deepcopy(self.raw)


def from_dict(doc):
    """Validate a (possibly partial) config document against the defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    full = _merge(DEFAULTS, doc)
    r = full["run"]
    try:
        run = RunConfig(
            M=_number(full, "run.M", int),
            runs=_number(full, "run.runs", int),
            seed=_number(full, "run.seed", int),
            n=_number(full, "run.n", int),
            mesh_multiplier=_number(full, "run.mesh_multiplier", int),
            flux=_number(full, "run.flux"),
            x_lo=_number(full, "run.x_lo"),
            x_hi=_number(full, "run.x_hi"),
            workers=_number(full, "run.workers", int, allow_none=True),
            nominal=_params(full["nominal"], "nominal"),
            goals=tuple(_goal(g, f"goals[{i}]") for i, g in enumerate(full["goals"])),
        )
    except ConfigError:
        raise
    except HybridUQError as exc:
        raise ConfigError(f"run: {exc}") from exc
    if run.seed < 0:
        raise ConfigError(f"run.seed must be nonnegative, got {r['seed']}")
    if not run.x_lo < run.x_hi:
        raise ConfigError("run.x_lo must be below run.x_hi")
    labels = [g.label for g in run.goals]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"goals must have distinct names, got {labels}")

    sens = full["sensitivity"]
    for i, d in enumerate(sens["directions"]):
        if d not in PARAM_NAMES:
            raise ConfigError(f"sensitivity.directions[{i}]: unknown direction {d!r}")
    rho = tuple(float(x) for x in sens["rho"])
    if any(not x > 0 for x in rho):
        raise ConfigError("sensitivity.rho entries must be positive")
    eps = None
    if sens["eps"] is not None:
        if not isinstance(sens["eps"], (list, dict)):
            raise ConfigError("sensitivity.eps must be a list or an object keyed by direction")
        eps = sens["eps"]
        if isinstance(eps, dict):
            eps = tuple((k, tuple(float(x) for x in v)) for k, v in eps.items())
        else:
            eps = tuple(float(x) for x in eps)

    fractions = tuple(float(q) for q in full["misspec"]["fractions"])
    if any(not 0 < q <= 1 for q in fractions):
        raise ConfigError("misspec.fractions must lie in (0, 1]")

    return Config(
        run=run,
        screen_ell=tuple(float(x) for x in full["screen"]["ell"]),
        screen_tau2=tuple(float(x) for x in full["screen"]["tau2"]),
        directions=tuple(sens["directions"]),
        rho=rho,
        eps=eps,
        use_concentration=bool(sens["use_concentration"]),
        data_path=full["data"]["path"],
        data_points=_number(full, "data.n_points", int, positive=True),
        data_extent=_number(full, "data.extent", positive=True),
        data_seed=_number(full, "data.seed", int),
        truth=_params(full["data"]["truth"], "data.truth"),
        misspec_nominal=_number(full, "misspec.nominal_fraction", positive=True),
        misspec_fractions=fractions,
        worst_nominal=_number(full, "worstcase.nominal_fraction", positive=True),
        worst_step=_number(full, "worstcase.step", positive=True),
        worst_count=_number(full, "worstcase.count", int, positive=True),
        worst_nominals=_number(full, "worstcase.nominals", int, positive=True),
        raw=full,
    )


def load(path=None):
    """Load a config file; ``None`` gives the defaults."""
    if path is None:
        return from_dict({})
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(doc)

