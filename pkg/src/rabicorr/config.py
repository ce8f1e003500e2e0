"""Run configuration: parsing, validation and default materialisation.

The config is a YAML mapping. Every default is written back into the
resolved config so the run manifest lists all effective values.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from rabicorr.hierarchy import default_n_cut
from rabicorr.lindblad import InitialState, SolverSettings
from rabicorr.model import ParameterError, RabiParams, RateSet
from rabicorr.operators import SpaceDims
from rabicorr.regimes import SweepConfig

SCHEMA_VERSION = 1
TASKS = ("timeseries", "hierarchy", "spectrum_scaling", "delta", "sweep")
LEVELS = ("rwa", "full", "both")
RATE_KEYS = ("gamma_a", "gamma_d", "gamma_p", "gamma_sigma")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` maps field paths to messages."""

    def __init__(self, problems: dict[str, str]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {v}" for k, v in problems.items()))


def _default_tree(task: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "task": task,
        "model_level": "both" if task in ("delta", "sweep") else "rwa",
        "params": {"coupling": 0.05, "omega0": 1.0, "d_a": None},
        "rates": {"gamma_a": 1e-3, "gamma_d": 1e-3, "gamma_p": 0.0, "gamma_sigma": 1e-3},
        "initial_state": {"kind": "fock_atom_ground", "photon_param": 10},
        "dims": {"n_max": None},
        "hierarchy": {"n_cut": None},
        "solver": {"rtol": 1e-8, "atol": 1e-10, "method": "DOP853", "horizon": None,
                   "sample_dt": None},
        "orders": [1, 3, 5],
        "spectrum": {"orders": list(range(2, 21)), "reduction": "printed"},
        "sweep": {"n_values": list(range(1, 11)), "omega_min": 0.005, "omega_max": 0.3,
                  "omega_points": 20, "delta_threshold": 0.1, "n_max_base": 20,
                  "n_max_per_coupling": 60.0, "n_max_step": 5,
                  "convergence_threshold": 1e-4},
        "output": {"directory": "output", "formats": ["csv", "json"]},
    }


def _merge(base: dict, extra: dict, path: str, problems: dict) -> None:
    for key, value in extra.items():
        where = f"{path}{key}"
        if key not in base:
            problems[where] = "unknown field"
        elif isinstance(base[key], dict) and base[key] is not None:
            if not isinstance(value, dict):
                problems[where] = "expected a mapping"
            else:
                _merge(base[key], value, where + ".", problems)
        else:
            base[key] = value


def set_dotted(tree: dict, dotted: str, value: Any) -> None:
    """Assign ``a.b.c = value`` in a nested mapping (used by --override)."""
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


@dataclass
class RunConfig:
    """Validated, fully resolved configuration."""

    tree: dict

    @property
    def task(self) -> str:
        return self.tree["task"]

    @property
    def model_level(self) -> str:
        return self.tree["model_level"]

    def params(self, level: str | None = None) -> RabiParams:
        p = self.tree["params"]
        level = level or ("rwa" if self.model_level == "both" else self.model_level)
        return RabiParams.for_level(level, p["coupling"], p["omega0"], p["d_a"])

    @property
    def rates(self) -> RateSet:
        return RateSet(**{k: float(self.tree["rates"][k]) for k in RATE_KEYS})

    @property
    def initial_state(self) -> InitialState:
        s = self.tree["initial_state"]
        param = s["photon_param"]
        if s["kind"] == "coherent_atom_ground":
            param = complex(param)
        return InitialState(s["kind"], param)

    @property
    def dims(self) -> SpaceDims:
        return SpaceDims(int(self.tree["dims"]["n_max"]))

    @property
    def n_cut(self) -> int:
        return int(self.tree["hierarchy"]["n_cut"])

    @property
    def orders(self) -> list[int]:
        return [int(n) for n in self.tree["orders"]]

    @property
    def solver(self) -> SolverSettings:
        s = self.tree["solver"]
        return SolverSettings(rtol=float(s["rtol"]), atol=float(s["atol"]), method=s["method"],
                              horizon=s["horizon"], sample_dt=s["sample_dt"])

    def sweep_config(self, workers: int = 1) -> SweepConfig:
        s = self.tree["sweep"]
        omegas = [float(w) for w in np.geomspace(s["omega_min"], s["omega_max"],
                                                 int(s["omega_points"]))]
        return SweepConfig(
            n_values=[int(n) for n in s["n_values"]], omega_values=omegas, rates=self.rates,
            initial_state=self.initial_state, delta_threshold=float(s["delta_threshold"]),
            n_max_base=int(s["n_max_base"]), n_max_per_coupling=float(s["n_max_per_coupling"]),
            n_max_step=int(s["n_max_step"]),
            convergence_threshold=float(s["convergence_threshold"]),
            settings=self.solver, workers=workers)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.tree)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.tree, sort_keys=True)

    def digest(self) -> str:
        blob = json.dumps(self.tree, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_config_dict(raw: dict, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Validate a raw mapping and materialise every default."""
    if not isinstance(raw, dict):
        raise ConfigError({"<root>": "config must be a mapping"})
    raw = copy.deepcopy(raw)
    # flat shorthand: coupling and rates at top level
    if "coupling" in raw:
        raw.setdefault("params", {})["coupling"] = raw.pop("coupling")
    for key in RATE_KEYS:
        if key in raw:
            raw.setdefault("rates", {})[key] = raw.pop(key)
    for dotted, value in (overrides or {}).items():
        if dotted == "coupling":
            dotted = "params.coupling"
        elif dotted in RATE_KEYS:
            dotted = f"rates.{dotted}"
        set_dotted(raw, dotted, value)

    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError({"task": f"must be one of {', '.join(TASKS)}, got {task!r}"})

    tree = _default_tree(task)
    problems: dict[str, str] = {}
    _merge(tree, raw, "", problems)
    if problems:
        raise ConfigError(problems)
    _resolve_and_check(tree, problems)
    if problems:
        raise ConfigError(problems)
    return RunConfig(tree)


def _resolve_and_check(tree: dict, problems: dict) -> None:
    if tree["model_level"] not in LEVELS:
        problems["model_level"] = f"must be one of {', '.join(LEVELS)}"
        return
    if tree["task"] == "delta" and tree["model_level"] != "both":
        problems["model_level"] = "delta requires both models (model_level: both)"
    if tree["task"] == "sweep" and tree["model_level"] != "both":
        problems["model_level"] = "sweep requires both models (model_level: both)"
    if tree["task"] == "hierarchy" and tree["model_level"] != "rwa":
        problems["model_level"] = "the moment hierarchy exists only for model_level: rwa"

    p = tree["params"]
    try:
        for level in ("rwa", "full"):
            RabiParams.for_level(level, float(p["coupling"]), float(p["omega0"]), p["d_a"])
    except (ParameterError, TypeError, ValueError) as exc:
        problems["params"] = str(exc)
    if p["d_a"] is None:
        p["d_a"] = float(p["coupling"]) ** 2 / (2 * float(p["omega0"]))

    for key in RATE_KEYS:
        value = tree["rates"][key]
        if not isinstance(value, (int, float)) or value < 0:
            problems[f"rates.{key}"] = "must be a non-negative number"

    s = tree["initial_state"]
    try:
        state = InitialState(s["kind"], complex(s["photon_param"])
                             if s["kind"] == "coherent_atom_ground" else s["photon_param"])
    except (ValueError, TypeError) as exc:
        problems["initial_state"] = str(exc)
        return
    n0 = int(np.ceil(state.mean_photons))
    if tree["dims"]["n_max"] is None:
        tree["dims"]["n_max"] = max(default_n_cut(n0), max(tree["orders"], default=1))
    if tree["hierarchy"]["n_cut"] is None:
        tree["hierarchy"]["n_cut"] = default_n_cut(n0)
    n_max = tree["dims"]["n_max"]
    if not isinstance(n_max, int) or n_max < 1:
        problems["dims.n_max"] = "must be an integer >= 1"
        return
    try:
        state.check_dims(SpaceDims(n_max))
    except ValueError as exc:
        problems["initial_state.photon_param"] = f"{exc} (dims.n_max={n_max})"
        problems["dims.n_max"] = (f"too small for initial_state.photon_param="
                                  f"{s['photon_param']}")
    if any(int(n) < 1 or int(n) > n_max for n in tree["orders"]):
        problems["orders"] = f"orders must lie in 1..dims.n_max={n_max}"
    if tree["task"] == "hierarchy" and tree["hierarchy"]["n_cut"] < max(tree["orders"]):
        problems["hierarchy.n_cut"] = "must be >= the largest requested order"
    if tree["spectrum"]["reduction"] not in ("printed", "leading"):
        problems["spectrum.reduction"] = "must be 'printed' or 'leading'"

    sw = tree["sweep"]
    if tree["task"] == "sweep":
        if not sw["n_values"] or int(sw["omega_points"]) < 1:
            problems["sweep"] = "sweep task requires nonempty n_values and omega_points >= 1"
        elif not 0 < sw["omega_min"] <= sw["omega_max"]:
            problems["sweep.omega_min"] = "need 0 < omega_min <= omega_max"
    slv = tree["solver"]
    if slv["method"] not in ("DOP853", "RK45", "Radau"):
        problems["solver.method"] = "must be DOP853, RK45 or Radau"
    for key in ("rtol", "atol"):
        if not isinstance(slv[key], (int, float)) or slv[key] <= 0:
            problems[f"solver.{key}"] = "must be a positive number"


def parse_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read and validate a YAML config file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError({"<file>": f"{path} does not exist"}) from None
    except yaml.YAMLError as exc:
        raise ConfigError({"<file>": f"cannot parse {path}: {exc}"}) from None
    return parse_config_dict(raw or {}, overrides)
