"""Gated single-photon figures of merit and closed-form estimates.

Brightness  beta = kappa_sp * int_{t_l}^{t_u} <a^dag a>(t) dt
Purity      g2   = int int G2(t, tau) / N
Indist.     I    = int int |G1(t, tau)|^2 / N
with N = int int n(t) n(t + tau), all double integrals over
t in [t_l, t_u], tau in [0, t_u - t].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .correlations import CorrelationGrid, triangle_grid
from .model import SystemParams, derive

_trapz = getattr(np, "trapezoid", None) or np.trapz


class UndefinedMeritError(ValueError):
    """Normalization vanishes: the gate saw no light."""


class GateError(ValueError):
    pass


def triangle_integral(t_grid, tau_grids, rows) -> float:
    """Trapezoid along tau for each row, then along t."""
    inner = np.array([_trapz(r, x=tau) if len(tau) > 1 else 0.0 for r, tau in zip(rows, tau_grids)])
    return float(_trapz(inner, x=t_grid))


def _window(times, values, t_l, t_u):
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    span = max(abs(times[-1] - times[0]), 1e-300)
    if t_l < times[0] - 1e-9 * span or t_u > times[-1] + 1e-9 * span:
        raise GateError(f"gate [{t_l:.3e}, {t_u:.3e}] outside series domain [{times[0]:.3e}, {times[-1]:.3e}]")
    inside = (times > t_l) & (times < t_u)
    x = np.concatenate([[t_l], times[inside], [t_u]])
    y = np.concatenate([[np.interp(t_l, times, values)], values[inside], [np.interp(t_u, times, values)]])
    return x, y


def brightness(times, n_values, kappa_sp: float, t_l: float, t_u: float) -> float:
    x, y = _window(times, n_values, t_l, t_u)
    return float(kappa_sp * _trapz(y, x=x))


def normalization(times, n_values, t_l: float, t_u: float, n_t: int = 97, n_tau: int = 97,
                  t_grid=None, tau_grids=None) -> float:
    """N on the same triangle the correlators use (pass the grid to share it exactly)."""
    _window(times, n_values, t_l, t_u)
    if t_grid is None:
        t_grid, tau_grids = triangle_grid(t_l, t_u, n_t, n_tau)
    n_of = lambda t: np.interp(t, times, n_values)
    rows = [n_of(t) * n_of(t + tau) for t, tau in zip(t_grid, tau_grids)]
    return triangle_integral(t_grid, tau_grids, rows)


def _require_positive(N_norm: float):
    if not N_norm > 0:
        raise UndefinedMeritError(f"normalization N={N_norm!r} is not positive")


def purity_g2(grid: CorrelationGrid, N_norm: float) -> float:
    _require_positive(N_norm)
    return triangle_integral(grid.t_grid, grid.tau_grids, grid.G2) / N_norm


def indistinguishability(grid: CorrelationGrid, N_norm: float) -> float:
    _require_positive(N_norm)
    rows = [np.abs(g) ** 2 for g in grid.G1]
    return triangle_integral(grid.t_grid, grid.tau_grids, rows) / N_norm


def grid_normalization(grid: CorrelationGrid) -> float:
    return normalization(grid.n_times, grid.n_series, grid.t_l, grid.t_u,
                         t_grid=grid.t_grid, tau_grids=grid.tau_grids)


def coarsen(grid: CorrelationGrid) -> CorrelationGrid:
    """Every other outer time and delay; row end points are always kept."""
    if len(grid.t_grid) % 2 == 0:
        raise ValueError("halving needs an odd number of outer points")

    def half(arr):
        idx = list(range(0, len(arr), 2))
        if idx[-1] != len(arr) - 1:
            idx.append(len(arr) - 1)
        return np.asarray(arr)[idx]

    keep = range(0, len(grid.t_grid), 2)
    return CorrelationGrid(
        t_grid=grid.t_grid[::2],
        tau_grids=[half(grid.tau_grids[i]) for i in keep],
        G1=[half(grid.G1[i]) for i in keep],
        G2=[half(grid.G2[i]) for i in keep],
        n_times=grid.n_times, n_series=grid.n_series,
        t_l=grid.t_l, t_u=grid.t_u,
        n_integral=None if grid.n_integral is None else grid.n_integral[::2],
        diagnostics=grid.diagnostics,
    )


def subgate(grid: CorrelationGrid, t_l: float, t_u: float) -> CorrelationGrid:
    """Restrict a grid to a narrower gate whose end points are grid times."""
    tg = grid.t_grid
    tol = 1e-6 * (tg[1] - tg[0])
    i0 = int(np.argmin(np.abs(tg - t_l)))
    i1 = int(np.argmin(np.abs(tg - t_u)))
    if abs(tg[i0] - t_l) > tol or abs(tg[i1] - t_u) > tol or i1 <= i0:
        raise GateError(f"gate [{t_l:.6e}, {t_u:.6e}] is not aligned with the outer grid")
    if t_u > grid.t_u + tol:
        raise GateError("sub-gate extends past the simulated window")
    tau_g, g1s, g2s = [], [], []
    for i in range(i0, i1 + 1):
        span = tg[i1] - tg[i]
        m = int(np.searchsorted(grid.tau_grids[i], span + tol, side="right"))
        tau_g.append(grid.tau_grids[i][:m])
        g1s.append(grid.G1[i][:m])
        g2s.append(grid.G2[i][:m])
    return CorrelationGrid(
        t_grid=tg[i0:i1 + 1], tau_grids=tau_g, G1=g1s, G2=g2s,
        n_times=grid.n_times, n_series=grid.n_series,
        t_l=float(tg[i0]), t_u=float(tg[i1]),
        n_integral=None if grid.n_integral is None else grid.n_integral[i0:i1 + 1],
        diagnostics=grid.diagnostics,
    )


@dataclass
class MeritReport:
    beta: float
    g2: float | None
    indistinguishability: float | None
    N_norm: float
    convergence: dict
    gate: tuple
    params_echo: dict = field(default_factory=dict)
    beta_ode: float | None = None

    def as_row(self) -> dict:
        return {
            "beta": self.beta, "g2": self.g2, "I": self.indistinguishability, "N": self.N_norm,
            "d_beta": self.convergence.get("beta"), "d_g2": self.convergence.get("g2"),
            "d_I": self.convergence.get("I"),
        }


def _merits(grid: CorrelationGrid, kappa_sp: float):
    beta = brightness(grid.n_times, grid.n_series, kappa_sp, grid.t_l, grid.t_u)
    N = grid_normalization(grid)
    if N > 0:
        return beta, purity_g2(grid, N), indistinguishability(grid, N), N
    return beta, None, None, N


def evaluate(grid: CorrelationGrid, params: SystemParams, check_refinement: bool = True) -> MeritReport:
    """All three merits plus their change under halved grid resolution."""
    beta, g2, I, N = _merits(grid, params.kappa_sp)
    convergence = {}
    if check_refinement and len(grid.t_grid) % 2 == 1 and len(grid.t_grid) >= 15:
        cb, cg, cI, _ = _merits(coarsen(grid), params.kappa_sp)
        convergence = {
            "beta": abs(beta - cb),
            "g2": None if g2 is None or cg is None else abs(g2 - cg),
            "I": None if I is None or cI is None else abs(I - cI),
        }
    beta_ode = None
    if grid.n_integral is not None and len(grid.n_integral):
        beta_ode = float(params.kappa_sp * (grid.n_integral[-1] - grid.n_integral[0]))
    echo = {"params": params.to_hz(), "derived": asdict(derive(params))}
    return MeritReport(beta=beta, g2=g2, indistinguishability=I, N_norm=N, convergence=convergence,
                       gate=(grid.t_l, grid.t_u), params_echo=echo, beta_ode=beta_ode)


@dataclass(frozen=True)
class Material:
    """Thin-film resonator constants for the dissipation-dilution Q estimate."""

    Q0: float  # intrinsic quality factor
    sigma: float  # film stress, Pa
    E: float  # Young's modulus, Pa
    density: float  # kg/m^3
    h: float  # thickness, m


# strained 20 nm SiN; intrinsic Q from the thickness scaling Q0 ~ 6900 * h / 100 nm
SIN_STRAINED = Material(Q0=6900 * 0.2, sigma=3.8e9, E=250e9, density=3100.0, h=20e-9)


def dilution_q(material: Material, f_m: float) -> float:
    return material.Q0 * material.sigma**2 / (3 * material.E * material.density * material.h**2 * f_m**2)


@dataclass(frozen=True)
class AnalyticEstimate:
    Omega: float
    Gamma_th: float
    R: float
    beta_0: float
    t_u_opt: float
    critical_delta: float
    g_c_window: tuple
    g_c_window_feasible: bool
    Q_m_estimate: float | None = None


def analytic_suite(params: SystemParams, material: Material | None = None) -> AnalyticEstimate:
    d = derive(params)
    heat = d.n_th * d.gamma_m
    lo = math.sqrt(heat * (2 * heat + params.kappa_c)) / 2
    hi = 2 * params.kappa_c
    crit = 2 * params.g_sp * params.lam / params.kappa_sp if params.kappa_sp > 0 else math.inf
    return AnalyticEstimate(
        Omega=d.Omega, Gamma_th=d.Gamma_th, R=d.R, beta_0=d.beta_0,
        t_u_opt=math.pi / d.R if d.R > 0 else math.inf,
        critical_delta=crit,
        g_c_window=(lo, hi),
        g_c_window_feasible=lo < hi,
        Q_m_estimate=None if material is None else dilution_q(material, params.f_m),
    )
