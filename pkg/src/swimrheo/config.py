"""Experiment configuration: a single YAML file with validated, defaulted sections.

Layout (every section optional except ``mode``)::

    mode: sweep                 # simulate | kinetic | asymptotic | sweep | compare | itest
    preset: fig1                # fills sweep, params and run lengths; explicit keys override
    params:                     # SuspensionParams fields, or ``phi`` in place of ``L``
      N: 200
      B: 0.2
      gamma: 0.1
    density:                    # spatial profile used by the formulas
      kind: box                 # box (follows params L and N) | gaussian | tabulated
    sweep:
      parameter: B              # exactly one axis
      values: [0.05, 0.1]
    seeds: {count: 10, master: 20240601}
    ibm: {enabled: true, duration: 40.0, burn_in: 10.0, sample_every: 10}
    kinetic: {l_max: 32, dt: 0.05, t_max: 200.0, tol: 1.0e-9}
    quadrature: {n_radial: 48, n_theta: 96, measure: area}
    output: {dir: out}
    workers: 1

Unknown keys anywhere are errors naming the key.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ParameterRangeError
from .params import SuspensionParams
from .rheology import QuadratureSettings, SpatialDensitySpec

MODES = ("simulate", "kinetic", "asymptotic", "sweep", "compare", "itest")
PARAM_KEYS = set(SuspensionParams.field_names()) | {"phi"}
SWEEPABLE = {"B", "gamma", "phi", "N", "L", "U0", "eta0", "D0", "V0"}

DEFAULTS = {
    "preset": None,
    "params": {},
    "density": {"kind": "box"},
    "sweep": None,
    "seeds": {"count": 10, "master": 20240601},
    "ibm": {
        "enabled": True,
        "duration": 40.0,
        "burn_in": 10.0,
        "sample_every": 10,
        "dt": None,
        "hydrodynamic": True,
        "collisions": True,
    },
    "kinetic": {"l_max": 32, "dt": 0.05, "t_max": 200.0, "tol": 1e-9},
    "quadrature": {"n_radial": 48, "n_theta": 96, "measure": "area", "k_max": None, "rtol": 1e-8,
                   "box_periods": 48, "box_nodes": 8},
    "output": {"dir": "out"},
    "workers": 1,
}

DENSITY_KEYS = {
    "box": {"kind", "L", "n_particles"},
    "gaussian": {"kind", "sigma_x", "sigma_y", "amplitude", "tilt", "n_particles"},
    "tabulated": {"kind", "path", "n_particles"},
}

# desk-scale presets for the three viscosity figures; the pusher model has
# U0 = -1 and rotational noise D = D0 B^2
_DESK_IBM = {"duration": 20.0, "burn_in": 5.0, "dt": 0.01, "sample_every": 10}

PRESETS = {
    "fig1": {
        "mode": "sweep",
        "params": {"N": 200, "phi": 0.02, "gamma": 0.1, "B": 0.2, "U0": -1.0, "D0": 1.0},
        "sweep": {"parameter": "B", "values": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]},
        "ibm": dict(_DESK_IBM),
    },
    "fig2": {
        "mode": "sweep",
        "params": {"N": 200, "phi": 0.02, "gamma": 0.1, "B": 0.2, "U0": -1.0, "D0": 1.0},
        "sweep": {"parameter": "phi", "values": [0.005, 0.01, 0.02, 0.04, 0.08, 0.12]},
        "ibm": dict(_DESK_IBM),
    },
    "fig3": {
        "mode": "sweep",
        "params": {"N": 200, "phi": 0.02, "gamma": 0.1, "B": 0.2, "U0": -1.0, "D0": 1.0},
        "sweep": {"parameter": "gamma", "values": [0.05, 0.1, 0.2, 0.5, 1.0, 2.0]},
        "ibm": dict(_DESK_IBM),
    },
}


@dataclass
class ExperimentConfig:
    mode: str
    params: SuspensionParams
    density: dict
    sweep: dict | None
    seeds: dict
    ibm: dict
    kinetic: dict
    quadrature: QuadratureSettings
    output_dir: Path
    workers: int = 1
    preset: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved configuration.

        The output directory and worker count are left out: neither changes
        any result, so reruns into another directory or with another pool
        size produce identical files.
        """
        content = {k: v for k, v in self.raw.items() if k not in ("output", "workers")}
        blob = json.dumps(content, sort_keys=True, default=_jsonable).encode()
        return hashlib.sha256(blob).hexdigest()

    def density_spec(self, params: SuspensionParams | None = None) -> SpatialDensitySpec:
        return build_density(self.density, params or self.params)

    def with_params(self, params: SuspensionParams) -> "ExperimentConfig":
        out = copy.copy(self)
        out.params = params
        return out


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not serializable: {type(v)}")


def build_density(section: dict, params: SuspensionParams) -> SpatialDensitySpec:
    kind = section.get("kind", "box")
    n = section.get("n_particles", params.N)
    if kind == "box":
        return SpatialDensitySpec.uniform_box(section.get("L", params.L), n)
    if kind == "gaussian":
        return SpatialDensitySpec.gaussian(
            section["sigma_x"], section.get("sigma_y"), section.get("amplitude", 1.0),
            section.get("tilt", 0.0), n,
        )
    return SpatialDensitySpec.from_csv(section["path"], n)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"section '{where}' must be a mapping", key=where)
    for k in section:
        if k not in allowed:
            name = f"{where}.{k}" if where else str(k)
            raise ConfigError(f"unknown configuration key '{name}'", key=name)


def build_params(section: dict) -> SuspensionParams:
    _check_keys(section, PARAM_KEYS, "params")
    values = dict(section)
    phi = values.pop("phi", None)
    if phi is not None and "L" in values:
        raise ConfigError("give either params.L or params.phi, not both", key="params.phi")
    try:
        params = SuspensionParams(**values)
        if phi is not None:
            params = params.with_phi(phi)
    except ParameterRangeError as exc:
        raise ParameterRangeError(str(exc), key=exc.key) from None
    except TypeError as exc:
        raise ConfigError(f"invalid parameter value: {exc}", key="params") from None
    return params


def resolve(data: dict) -> ExperimentConfig:
    """Validate a configuration mapping and fill in defaults."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    _check_keys(data, set(DEFAULTS) | {"mode"}, "")
    preset = data.get("preset")
    merged = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}' (known: {', '.join(PRESETS)})", key="preset")
        merged = _merge(merged, PRESETS[preset])
    merged = _merge(merged, {k: v for k, v in data.items() if v is not None or k == "sweep"})
    if "sweep" in data and data["sweep"] is None:
        merged["sweep"] = None
    mode = merged.get("mode")
    if mode is None:
        raise ConfigError("missing required key 'mode'", key="mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}", key="mode")
    for name in ("seeds", "ibm", "kinetic", "quadrature", "output"):
        _check_keys(merged[name], DEFAULTS[name], name)
    density = merged["density"]
    if not isinstance(density, dict) or density.get("kind") not in DENSITY_KEYS:
        raise ConfigError("density.kind must be one of box, gaussian, tabulated", key="density.kind")
    _check_keys(density, DENSITY_KEYS[density["kind"]], "density")

    params = build_params(merged["params"])

    sweep = merged["sweep"]
    if sweep is not None:
        _check_keys(sweep, {"parameter", "values"}, "sweep")
        axis = sweep.get("parameter")
        if isinstance(axis, (list, tuple)):
            raise ConfigError("a sweep has exactly one axis", key="sweep.parameter")
        if axis not in SWEEPABLE:
            raise ConfigError(f"cannot sweep over {axis!r}; choose one of {sorted(SWEEPABLE)}", key="sweep.parameter")
        values = sweep.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values must be a non-empty list", key="sweep.values")
        for v in values:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError("sweep.values must be numbers", key="sweep.values")
            check = dict(merged["params"])
            if axis == "phi":
                check.pop("L", None)
            elif axis == "L":
                check.pop("phi", None)
            check[axis] = v
            try:
                build_params(check)
            except ParameterRangeError as exc:
                raise ParameterRangeError(f"sweep value {v}: {exc}", key=exc.key) from None
    elif mode == "sweep":
        raise ConfigError("mode 'sweep' needs a sweep section", key="sweep")

    seeds = merged["seeds"]
    if not isinstance(seeds.get("count"), int) or seeds["count"] < 1:
        raise ConfigError("seeds.count must be a positive integer", key="seeds.count")
    if not isinstance(seeds.get("master"), int) or seeds["master"] < 0:
        raise ConfigError("seeds.master must be a non-negative integer", key="seeds.master")
    ibm = merged["ibm"]
    for key in ("duration", "burn_in"):
        if not isinstance(ibm[key], (int, float)) or ibm[key] < 0:
            raise ConfigError(f"ibm.{key} must be a non-negative number", key=f"ibm.{key}")
    if ibm["burn_in"] >= ibm["duration"] and ibm["enabled"]:
        raise ConfigError("ibm.burn_in must be shorter than ibm.duration", key="ibm.burn_in")
    if not isinstance(merged["workers"], int) or merged["workers"] < 1:
        raise ConfigError("workers must be a positive integer", key="workers")
    try:
        quad = QuadratureSettings(**merged["quadrature"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="quadrature.measure") from None
    return ExperimentConfig(
        mode=mode, params=params, density=density, sweep=sweep, seeds=seeds, ibm=ibm,
        kinetic=merged["kinetic"], quadrature=quad, output_dir=Path(merged["output"]["dir"]),
        workers=merged["workers"], preset=preset, raw=merged,
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}", key="path")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration is not valid YAML: {exc}", key="path") from None
    return resolve(data or {})
