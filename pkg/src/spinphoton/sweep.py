"""End-to-end runs: one operating point, Cartesian sweeps and CSV output."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import PARAM_KEYS, RunConfig
from .constants import CODATA2018
from .correlations import CorrelationGrid, build_grid
from .dynamics import EvolveConfig, prepare_initial, steady_state
from .merit import AnalyticEstimate, MeritReport, analytic_suite, evaluate, subgate
from .model import FeasibilityReport, SystemParams, build_model, feasibility, scaled_params
from .operators import dag, expectation, top_level_populations

log = logging.getLogger(__name__)

FAST_TRUNCATION = (6, 4, 4)
FAST_GRID = 49
FAST_MAX_DIMENSION = 320

CHECK_COLUMNS = FeasibilityReport.CHECKS
MERIT_COLUMNS = ("beta", "g2", "I", "N", "d_beta", "d_g2", "d_I")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and diagnostics."""

    def __init__(self, stage: str, message: str, diagnostics: dict | None = None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.diagnostics = diagnostics or {}


@dataclass
class Profile:
    params: SystemParams
    trunc: tuple
    n_t: int
    n_tau: int
    method: str
    evolve: EvolveConfig
    label: str
    max_dimension: int


def profile_for(config: RunConfig, fast: bool = False) -> Profile:
    params = config.system_params()
    trunc = config.trunc()
    n_t, n_tau = int(config.grid["n_t"]), int(config.grid["n_tau"])
    label = "full"
    max_dim = int(config.adequacy["max_dimension"])
    if fast:
        max_dim = min(max_dim, FAST_MAX_DIMENSION)
        params = scaled_params(params, config.fast_scale)
        trunc = FAST_TRUNCATION
        n_t, n_tau = min(n_t, FAST_GRID), min(n_tau, FAST_GRID)
        label = (f"fast(scale={config.fast_scale!r}, truncation={trunc}, grid={n_t}x{n_tau}, "
                 f"max_dimension={max_dim})")
    evolve = config.evolve_config(params)
    return Profile(params, trunc, n_t, n_tau, config.grid.get("method", "adjoint"), evolve, label, max_dim)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with stage context
        raise StageError(name, f"{type(exc).__name__}: {exc}", getattr(exc, "__dict__", {})) from exc


def simulate(params: SystemParams, trunc, evolve: EvolveConfig, t_l: float, t_u: float,
             n_t: int = 97, n_tau: int = 97, method: str = "adjoint", workers: int = 1):
    """Cool the bath to equilibrium (spin idle in |d>), excite the spin, fill the correlator grid."""
    bath = _stage("model", build_model, params, trunc, include_spin=False)
    full = _stage("model", build_model, params, trunc)
    rho_bath = _stage("steady_state", steady_state, bath, evolve)
    rho0, _ = _stage("prepare", prepare_initial, rho_bath, bath.layout)
    grid = _stage("correlations", build_grid, full, rho0, t_l, t_u, n_t, n_tau, evolve, method, workers)
    grid.diagnostics["steady_top_populations"] = top_level_populations(rho_bath, bath.layout, bath.layout.labels)
    grid.diagnostics["truncation"] = tuple(trunc)
    grid.diagnostics["steady_n_a"] = float(expectation(number_op(bath), rho_bath).real)
    return grid


def number_op(model):
    a = model.ops["a"]
    return dag(a) @ a


def _worst_top(grid: CorrelationGrid) -> dict:
    tops = dict(grid.diagnostics.get("top_populations", {}))
    for k, v in grid.diagnostics.get("steady_top_populations", {}).items():
        tops[k] = max(tops.get(k, 0.0), v)
    return tops


def _escalate(trunc: list, bad: list, tops: dict, step: int, max_dim: int) -> list | None:
    """Grow the leaking modes, worst first, as far as the dimension cap allows."""
    labels = ("phonon", "photon", "cooling")
    new = list(trunc)
    for lab in sorted(bad, key=lambda k: -tops[k]):
        trial = list(new)
        trial[labels.index(lab)] += step
        if 2 * math.prod(trial) <= max_dim:
            new = trial
    return None if new == list(trunc) else new


def simulate_adequate(config: RunConfig, prof: Profile, t_l: float, t_u: float, n_t: int, n_tau: int,
                      workers: int = 1) -> CorrelationGrid:
    """``simulate`` with automatic truncation escalation on top-level leakage.

    Escalation stops when every mode is below the limit, after
    ``max_escalations`` re-runs, or when no leaking mode can grow without the
    full Hilbert-space dimension exceeding the profile's cap.
    """
    limit = float(config.adequacy["top_population_limit"])
    step = int(config.adequacy["escalation_step"])
    budget = int(config.adequacy["max_escalations"])
    trunc = list(prof.trunc)
    history = []
    labels = ("phonon", "photon", "cooling")
    for attempt in range(budget + 1):
        grid = simulate(prof.params, tuple(trunc), prof.evolve, t_l, t_u, n_t, n_tau, prof.method, workers)
        tops = _worst_top(grid)
        history.append({"truncation": tuple(trunc), "top_populations": tops})
        bad = [lab for lab in labels if tops.get(lab, 0.0) >= limit]
        if not bad:
            grid.diagnostics["adequate"] = True
            break
        grown = _escalate(trunc, bad, tops, step, prof.max_dimension) if attempt < budget else None
        if grown is None:
            grid.diagnostics["adequate"] = False
            log.warning("truncation %s still inadequate (escalation budget exhausted): %s", tuple(trunc), tops)
            break
        trunc = grown
        log.info("escalating truncation to %s (top populations %s)", trunc, tops)
    grid.diagnostics["escalations"] = history
    return grid


@dataclass
class PointResult:
    merits: MeritReport
    feasibility: FeasibilityReport
    analytic: AnalyticEstimate
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        m = self.merits
        return {
            "beta": m.beta, "g2": m.g2, "indistinguishability": m.indistinguishability,
            "N_norm": m.N_norm, "beta_ode": m.beta_ode, "convergence": m.convergence, "gate": list(m.gate),
            "feasibility": {k: getattr(self.feasibility, k).ok for k in CHECK_COLUMNS},
            "analytic": {k: getattr(self.analytic, k) for k in ("Omega", "Gamma_th", "R", "beta_0", "t_u_opt")},
            "params": m.params_echo,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _result(grid: CorrelationGrid, params: SystemParams) -> PointResult:
    merits = _stage("merits", evaluate, grid, params)
    diag = dict(grid.diagnostics)
    if "steady_n_a" in diag:
        # light the cavity leaks anyway from the thermally driven mechanics
        floor = params.kappa_sp * diag["steady_n_a"] * (grid.t_u - grid.t_l)
        diag["beta_thermal_floor"] = floor
        diag["above_thermal_floor"] = bool(merits.beta > floor * (1 + 1e-3) + 1e-12)
    return PointResult(merits, feasibility(params), analytic_suite(params), diag)


def run_point(config: RunConfig, fast: bool = False, workers: int = 1) -> PointResult:
    prof = profile_for(config, fast)
    p = prof.params
    grid = simulate_adequate(config, prof, p.t_l, p.t_u, prof.n_t, prof.n_tau, workers)
    res = _result(grid, p)
    res.diagnostics["profile"] = prof.label
    return res


def report_feasibility(config: RunConfig, fast: bool = False) -> tuple[FeasibilityReport, AnalyticEstimate]:
    params = profile_for(config, fast).params
    return feasibility(params), analytic_suite(params)


# --- sweeps -------------------------------------------------------------------

GATE_PATHS = {"params.t_l", "params.t_u"}


@dataclass
class SweepResult:
    axes: list
    rows: list  # dicts: axis values + merit/feasibility columns or error
    header: list


def sweep_points(config: RunConfig) -> list[tuple]:
    if not config.sweep:
        raise ValueError("sweep needs at least one axis")
    return list(itertools.product(*(ax.values for ax in config.sweep)))


def _point_config(config: RunConfig, values) -> RunConfig:
    out = config
    for ax, v in zip(config.sweep, values):
        out = out.with_value(ax.path, v)
    return out


def _row(result: PointResult | None, error: str | None) -> dict:
    row = {k: None for k in MERIT_COLUMNS + CHECK_COLUMNS}
    row["error"] = error
    if result is not None:
        row.update(result.merits.as_row())
        for k in CHECK_COLUMNS:
            row[k] = getattr(result.feasibility, k).ok
    return row


def _run_one(args) -> dict:
    config, values, fast = args
    try:
        res = run_point(_point_config(config, values), fast=fast)
        return _row(res, None)
    except StageError as exc:
        return _row(None, str(exc))
    except Exception as exc:  # noqa: BLE001 - per-point isolation
        return _row(None, f"{type(exc).__name__}: {exc}")


def _gate_lattice(gates, n_t):
    """Common outer-grid spacing on which every gate end point is a grid time."""
    ps = [(Fraction(round(tl * 1e12)), Fraction(round(tu * 1e12))) for tl, tu in gates]
    t0 = min(tl for tl, _ in ps)
    offsets = [int(x - t0) for g in ps for x in g if x != t0]
    base = math.gcd(*offsets) if offsets else int(ps[0][1] - t0)
    min_width = min(int(tu - tl) for tl, tu in ps)
    k = max(2, math.ceil(base * (n_t - 1) / min_width))
    k += k % 2
    h = Fraction(base, k)
    n_total = int((max(tu for _, tu in ps) - t0) / h) + 1
    return float(t0) * 1e-12, float(h) * 1e-12, n_total


def _gate_scan(config: RunConfig, points, fast: bool) -> list[dict]:
    """All points differ only in their gate: one simulation over the envelope."""
    paths = [ax.path for ax in config.sweep]
    prof = profile_for(config, fast)
    gates = []
    for values in points:
        d = dict(zip(paths, values))
        tl = d.get("params.t_l", config.params_hz["t_l"])
        tu = d.get("params.t_u", config.params_hz["t_u"])
        gates.append((float(tl), float(tu)))
    valid = [g for g in gates if g[1] > g[0] >= 0]
    if not valid:
        return [_row(None, "ParameterError: need t_u > t_l >= 0") for _ in gates]
    t0, h, n_total = _gate_lattice(valid, prof.n_t)
    t_end = t0 + h * (n_total - 1)
    try:
        grid = simulate_adequate(config, prof, t0, t_end, n_total, n_total)
    except StageError as exc:
        return [_row(None, str(exc)) for _ in gates]
    rows = []
    for tl, tu in gates:
        if not tu > tl >= 0:
            rows.append(_row(None, "ParameterError: need t_u > t_l >= 0"))
            continue
        try:
            sub = subgate(grid, t0 + h * round((tl - t0) / h), t0 + h * round((tu - t0) / h))
            rows.append(_row(_result(sub, prof.params.replace(t_l=tl, t_u=tu)), None))
        except Exception as exc:  # noqa: BLE001
            rows.append(_row(None, f"{type(exc).__name__}: {exc}"))
    return rows


def provenance(config: RunConfig, profile: str) -> list[str]:
    return [
        f"spinphoton {__version__}",
        f"constants {CODATA2018.header()}",
        f"config_sha256 {config.digest()}",
        "units: rates in Hz as configured (x 2*pi internally); times in s; T in K",
        f"profile {profile}",
    ]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_sweep(config: RunConfig, threads: int = 1, fast: bool = False, out_dir: str | Path | None = None) -> SweepResult:
    """Cartesian sweep with per-point isolation; row order is the axis product order."""
    points = sweep_points(config)
    axes = [ax.path for ax in config.sweep]
    header = axes + list(MERIT_COLUMNS) + list(CHECK_COLUMNS) + ["error"]
    writer = fh = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "sweep.csv", "w", newline="")
        for line in provenance(config, profile_for(config, fast).label):
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)

    rows = []

    def emit(values, row):
        full = dict(zip(axes, values))
        full.update(row)
        rows.append(full)
        if writer is not None:
            writer.writerow([_fmt(full[k]) for k in header])
            fh.flush()

    try:
        if set(axes) <= GATE_PATHS:
            for values, row in zip(points, _gate_scan(config, points, fast)):
                emit(values, row)
        elif threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for values, row in zip(points, pool.map(_run_one, [(config, v, fast) for v in points])):
                    emit(values, row)
        else:
            for values in points:
                emit(values, _run_one((config, values, fast)))
    finally:
        if fh is not None:
            fh.close()
    result = SweepResult(axes=axes, rows=rows, header=header)
    if out_dir is not None and config.panel:
        write_panel(result, config.panel, out_dir)
    return result


PANEL_LABELS = {
    "params.t_u": "gate end time t_u (s)",
    "params.t_l": "gate start time t_l (s)",
    "params.Q_m": "mechanical quality factor Q_m",
    "params.gamma_star": "spin dephasing gamma*/2pi (Hz)",
    "params.T": "temperature T (K)",
    "params.g_c": "cooling coupling g_c/2pi (Hz)",
}


def write_panel(result: SweepResult, panel: str, out_dir: str | Path) -> Path:
    """Per-panel data file plus an entry in the plotting manifest."""
    out = Path(out_dir)
    x = result.axes[0]
    path = out / f"fig2{panel}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x, "I", "g2", "beta"])
        for row in result.rows:
            w.writerow([_fmt(row[x]), _fmt(row["I"]), _fmt(row["g2"]), _fmt(row["beta"])])
    manifest_path = out / "plot_manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    manifest[f"fig2{panel}"] = {
        "file": path.name,
        "x": {"column": x, "label": PANEL_LABELS.get(x, x)},
        "series": [{"column": "I", "label": "indistinguishability I"},
                   {"column": "g2", "label": "purity g2"},
                   {"column": "beta", "label": "brightness beta"}],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def merits_csv(config: RunConfig, result: PointResult, profile: str) -> str:
    header = list(MERIT_COLUMNS) + list(CHECK_COLUMNS)
    buf = io.StringIO()
    for line in provenance(config, profile):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    row = _row(result, None)
    w.writerow([_fmt(row[k]) for k in header])
    return buf.getvalue()


__all__ = [
    "PARAM_KEYS", "PointResult", "StageError", "SweepResult", "merits_csv", "profile_for",
    "report_feasibility", "run_point", "run_sweep", "simulate",
]
