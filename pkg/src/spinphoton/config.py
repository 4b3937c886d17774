"""Run configuration: strict TOML schema, Hz-based, round-trippable.

Rates in ``[params]`` are ordinary frequencies in Hz; the factor 2*pi is
applied when :meth:`RunConfig.system_params` builds the angular
:class:`~spinphoton.model.SystemParams`. Times are in seconds, temperature in
Kelvin. Any parameter left out takes its value from the reference operating
point (:func:`~spinphoton.model.caption_point`).

Example::

    [params]
    Q_m = 1e9
    gamma_star = 200.0

    [truncation]
    N_b = 8
    N_a = 3
    N_c = 4

    [[sweep]]
    path = "params.Q_m"
    values = [1e8, 5e8, 1e9]
"""

from __future__ import annotations

import math

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .dynamics import EvolveConfig
from .model import SystemParams, caption_point

HEADER = (
    "# spinphoton run configuration\n"
    "# rates in Hz (2*pi applied internally), times in s, temperature in K\n"
)

# file key -> SystemParams field
PARAM_KEYS = {
    "f_m": "f_m", "Q_m": "Q_m", "T": "T", "lambda": "lam", "g_sp": "g_sp", "g_c": "g_c",
    "kappa_sp": "kappa_sp", "kappa_c": "kappa_c", "gamma_star": "gamma_star", "delta": "delta",
    "t_l": "t_l", "t_u": "t_u", "gamma_relax": "gamma_relax",
}
SOLVER_KEYS = ("method", "dt_init", "rel_tol", "abs_tol", "max_dt", "frame")
GRID_KEYS = ("n_t", "n_tau", "method")
ADEQUACY_KEYS = ("top_population_limit", "escalation_step", "max_escalations", "max_dimension")
OUTPUT_KEYS = ("dir", "formats")
SECTIONS = ("params", "truncation", "solver", "grid", "adequacy", "sweep", "output", "panel", "fast_scale")


class ConfigError(ValueError):
    pass


def default_params_hz() -> dict:
    hz = caption_point().to_hz()
    return {k: hz[v] for k, v in PARAM_KEYS.items()}


@dataclass
class SweepAxis:
    path: str
    values: list

    def __post_init__(self):
        if not self.values:
            raise ConfigError(f"sweep axis {self.path!r} has no values")
        section, _, key = self.path.partition(".")
        valid = {
            "params": PARAM_KEYS, "truncation": ("N_b", "N_a", "N_c"),
            "grid": ("n_t", "n_tau"), "solver": ("max_dt", "dt_init", "rel_tol", "abs_tol"),
        }
        if section not in valid or key not in valid[section]:
            raise ConfigError(f"sweep path {self.path!r} does not name a parameter")


@dataclass
class RunConfig:
    params_hz: dict = field(default_factory=default_params_hz)
    truncation: dict = field(default_factory=lambda: {"N_b": 8, "N_a": 3, "N_c": 4})
    solver: dict = field(default_factory=lambda: {"method": "rk4", "rel_tol": 1e-8, "abs_tol": 1e-12, "frame": "lab"})
    grid: dict = field(default_factory=lambda: {"n_t": 97, "n_tau": 97, "method": "adjoint"})
    adequacy: dict = field(default_factory=lambda: {
        "top_population_limit": 1e-4, "escalation_step": 4, "max_escalations": 2, "max_dimension": 1024})
    sweep: list = field(default_factory=list)
    output: dict = field(default_factory=lambda: {"dir": "out", "formats": ["csv"]})
    panel: str | None = None
    fast_scale: float = 0.5

    def system_params(self) -> SystemParams:
        return SystemParams.from_hz(**{PARAM_KEYS[k]: v for k, v in self.params_hz.items()})

    def trunc(self) -> tuple[int, int, int]:
        t = self.truncation
        return int(t["N_b"]), int(t["N_a"]), int(t["N_c"])

    def evolve_config(self, params: SystemParams | None = None) -> EvolveConfig:
        params = params or self.system_params()
        kw = {k: v for k, v in self.solver.items()}
        return EvolveConfig.for_params(params, **kw)

    def with_value(self, path: str, value) -> "RunConfig":
        out = copy.deepcopy(self)
        section, _, key = path.partition(".")
        target = {"params": out.params_hz, "truncation": out.truncation, "grid": out.grid,
                  "solver": out.solver}[section]
        target[key] = value
        out.sweep = []
        return out

    def to_dict(self) -> dict:
        d = {
            "params": dict(self.params_hz),
            "truncation": dict(self.truncation),
            "solver": dict(self.solver),
            "grid": dict(self.grid),
            "adequacy": dict(self.adequacy),
            "output": dict(self.output),
            "fast_scale": self.fast_scale,
        }
        if self.panel is not None:
            d["panel"] = self.panel
        if self.sweep:
            d["sweep"] = [{"path": ax.path, "values": list(ax.values)} for ax in self.sweep]
        return d

    def dumps(self) -> str:
        return HEADER + tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(tomli_w.dumps(self.to_dict()).encode()).hexdigest()


def _strict(section: str, data: dict, allowed) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    return data


def from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown configuration section(s): {', '.join(unknown)}")
    cfg = RunConfig()
    cfg.params_hz.update(_strict("params", data.get("params", {}), PARAM_KEYS))
    cfg.truncation.update(_strict("truncation", data.get("truncation", {}), ("N_b", "N_a", "N_c")))
    cfg.solver.update(_strict("solver", data.get("solver", {}), SOLVER_KEYS))
    cfg.grid.update(_strict("grid", data.get("grid", {}), GRID_KEYS))
    cfg.adequacy.update(_strict("adequacy", data.get("adequacy", {}), ADEQUACY_KEYS))
    cfg.output.update(_strict("output", data.get("output", {}), OUTPUT_KEYS))
    cfg.panel = data.get("panel")
    cfg.fast_scale = float(data.get("fast_scale", cfg.fast_scale))
    sweep = data.get("sweep", [])
    if not isinstance(sweep, list):
        raise ConfigError("[[sweep]] must be an array of tables")
    for ax in sweep:
        _strict("sweep", ax, ("path", "values"))
        if "path" not in ax or "values" not in ax:
            raise ConfigError("each sweep axis needs 'path' and 'values'")
        cfg.sweep.append(SweepAxis(ax["path"], list(ax["values"])))
    try:
        cfg.system_params()
        cfg.evolve_config()
        for key in ("n_t", "n_tau"):
            if int(cfg.grid[key]) < 8:
                raise ConfigError(f"grid.{key} must be >= 8")
        if min(cfg.trunc()) < 2:
            raise ConfigError("truncations must be >= 2")
        if int(cfg.adequacy["max_dimension"]) < 2 * math.prod(cfg.trunc()):
            raise ConfigError("adequacy.max_dimension is below the starting Hilbert-space dimension")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def loads(text: str) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(data)


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)
