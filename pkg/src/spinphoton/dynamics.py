"""Master-equation time evolution, steady states and initial-state preparation."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .integrate import propagate
from .model import LindbladModel, SystemParams
from .operators import (
    HilbertLayout,
    LayoutError,
    dag,
    fock_dm,
    ground_state,
    partial_trace,
    tensor_states,
    top_level_populations,
)

log = logging.getLogger(__name__)

BOSONS = ("phonon", "photon", "cooling")


class SteadyStateError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EvolveConfig:
    method: str = "rk4"  # "rk4" (fixed step) or "rk45" (adaptive)
    dt_init: float | None = None
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_dt: float | None = None
    frame: str = "lab"  # or "detuned-rotating"

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.frame not in ("lab", "detuned-rotating"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.dt_init is not None and self.max_dt is not None and self.dt_init > self.max_dt:
            raise ValueError("dt_init must not exceed max_dt")

    @classmethod
    def for_params(cls, params: SystemParams, **kw) -> "EvolveConfig":
        """Default step ceiling 1/(50 f_m): >= 50 samples per mechanical period."""
        kw.setdefault("max_dt", 1.0 / (50.0 * params.f_m))
        return cls(**kw)

    def step(self, model: LindbladModel) -> float:
        """Concrete step: the configured ceiling, never beyond the RK4 stability bound."""
        stable = stable_step(model)
        dt = self.dt_init if self.dt_init is not None else self.max_dt
        if dt is None:
            return stable
        return min(dt, stable) if self.method == "rk4" else dt


def stable_step(model: LindbladModel, safety: float = 2.5) -> float:
    """Largest RK4 step keeping every Liouvillian eigenvalue inside the stability region."""
    H = model.H
    if model.dim <= 2048:
        ev = np.linalg.eigvalsh(H.toarray())
        spread = float(ev[-1] - ev[0])
    else:
        spread = 2.0 * float(abs(H).sum(axis=1).max())
    decay = 0.0
    for rate, A in model.dissipators:
        if rate:
            decay += rate * float(abs(dag(A) @ A).sum(axis=1).max())
    scale = math.hypot(spread, decay)
    return math.inf if scale == 0 else safety / scale


def lindblad_rhs(rho: np.ndarray, model: LindbladModel) -> np.ndarray:
    """-i[H, rho] + sum_k rate_k D[A_k] rho, in matrix form."""
    if rho.shape != (model.dim, model.dim):
        raise LayoutError(f"state shape {rho.shape} does not match model dimension {model.dim}")
    heff = model.H_eff
    out = -1j * (heff @ rho)
    out += 1j * (heff.conj() @ rho.T).T  # rho @ heff^dag
    for rate, A in model.dissipators:
        if rate:
            out += rate * (A @ (A.conj() @ rho.T).T)  # A rho A^dag
    return out


def symmetrize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def default_observables(model: LindbladModel) -> dict:
    ops = model.ops
    obs = {}
    for key, name in (("a", "n_a"), ("b", "n_b"), ("c", "n_c"), ("sm", "n_spin")):
        if key in ops:
            obs[name] = (dag(ops[key]) @ ops[key]).tocsr()
    return obs


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: np.ndarray
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    samples: list = field(default_factory=list)
    integrals: dict[str, float] = field(default_factory=dict)
    sample_integrals: dict[str, np.ndarray] = field(default_factory=dict)
    trace_drift: float = 0.0
    top_populations: dict[str, float] = field(default_factory=dict)
    min_diagonal: float = 0.0


def _rotating_rhs(model: LindbladModel):
    """Interaction-picture generator w.r.t. the diagonal free Hamiltonian H0."""
    if model.H0 is None:
        raise ValueError("rotating frame needs the model's free Hamiltonian")
    n = model.dim
    E = np.real(model.H0.diagonal())
    HI = (model.H - model.H0).tocoo()
    rows, cols, data = HI.row, HI.col, HI.data
    dE = E[rows] - E[cols]
    diss = sp.csr_matrix((n * n, n * n), dtype=complex)
    eye = sp.identity(n, dtype=complex, format="csr")
    for rate, A in model.dissipators:
        if rate:
            AdA = dag(A) @ A
            diss = diss + rate * (sp.kron(A, A.conj()) - 0.5 * sp.kron(AdA, eye) - 0.5 * sp.kron(eye, AdA.conj()))
    diss = diss.tocsr()

    def f(t, y):
        Ht = sp.csr_matrix((data * np.exp(1j * dE * t), (rows, cols)), shape=(n, n))
        rho = y.reshape(n, n)
        comm = Ht @ rho
        comm -= (Ht.T @ rho.T).T
        return (-1j * comm).reshape(-1) + diss @ y

    def to_lab(t, rho_i):
        ph = np.exp(-1j * E * t)
        return rho_i * ph[:, None] * ph.conj()[None, :]

    return f, to_lab


def evolve(
    state0: np.ndarray,
    model: LindbladModel,
    t_final: float,
    config: EvolveConfig | None = None,
    observables: Mapping[str, sp.spmatrix] | None = None,
    sample_times: Sequence[float] = (),
    integrate_observables: Sequence[str] = (),
) -> Trajectory:
    """Propagate ``state0`` from 0 to ``t_final``.

    Observables are recorded on every accepted step; full states are kept only
    at ``sample_times``. Each step re-symmetrizes rho but never renormalizes
    its trace. ``integrate_observables`` names observables whose time integral
    is carried along as extra ODE components, giving an integral independent
    of any post-hoc quadrature.
    """
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    config = config or EvolveConfig()
    n = model.dim
    if state0.shape != (n, n):
        raise LayoutError(f"state shape {state0.shape} does not match model dimension {n}")
    obs = dict(default_observables(model) if observables is None else observables)
    names = list(obs)
    mats = [obs[k] for k in names]
    # Tr(O rho) = vec(O^T) . vec(rho)
    obs_rows = sp.vstack([sp.csr_matrix(m.T.reshape(1, n * n)) for m in mats]).tocsr() if mats else None
    int_idx = [names.index(k) for k in integrate_observables]
    n_int = len(int_idx)
    int_rows = obs_rows[int_idx] if n_int else None
    bosons = [b for b in BOSONS if b in model.layout.labels]

    if config.frame == "lab":
        L = model.liouvillian
        base = lambda t, y: L @ y
        to_lab = lambda t, r: r
    else:
        base, to_lab = _rotating_rhs(model)

    if n_int:
        def f(t, y):
            v = y[: n * n]
            return np.concatenate([base(t, v), int_rows @ v])
    else:
        f = base

    def post(y):
        rho = y[: n * n].reshape(n, n)
        y[: n * n] = symmetrize(rho).reshape(-1)
        return y

    times, values, tops = [0.0], [], []
    trace_drift = [abs(np.trace(state0) - 1)]
    min_diag = [float(np.min(np.real(np.diagonal(state0))))]

    def record(t, y):
        rho = to_lab(t, y[: n * n].reshape(n, n))
        if obs_rows is not None:
            values.append(np.real(obs_rows @ rho.reshape(-1)))
        diag = np.real(np.diagonal(rho))
        trace_drift.append(abs(diag.sum() - 1))
        min_diag.append(float(diag.min()))
        if bosons:
            tops.append(list(top_level_populations(rho, model.layout, bosons).values()))

    y0 = np.concatenate([state0.reshape(-1).astype(complex), np.zeros(n_int, complex)])
    record(0.0, y0)

    def on_step(t, y):
        times.append(t)
        record(t, y)

    samples_t = sorted(float(s) for s in sample_times if 0 <= s <= t_final)
    targets = sorted(set(samples_t) | {float(t_final)})
    dt = config.step(model)
    if t_final > 0:
        states = propagate(
            f, y0, 0.0, targets, method=config.method, dt=dt,
            max_dt=config.max_dt if config.max_dt is not None else dt,
            rtol=config.rel_tol, atol=config.abs_tol, post_step=post, on_step=on_step,
        )
    else:
        states = [y0.copy() for _ in targets]
    by_t = {t: to_lab(t, s[: n * n].reshape(n, n)) for t, s in zip(targets, states)}
    cum = {t: s[n * n:] for t, s in zip(targets, states)}
    final = by_t[float(t_final)]
    vals = np.array(values) if values else np.zeros((len(times), 0))
    traj = Trajectory(
        times=np.array(times),
        observables={k: vals[:, i] for i, k in enumerate(names)},
        final_state=final,
        sample_times=np.array(samples_t),
        samples=[by_t[t] for t in samples_t],
        integrals={names[j]: float(np.real(states[-1][n * n + i])) for i, j in enumerate(int_idx)},
        sample_integrals={names[j]: np.array([np.real(cum[t][i]) for t in samples_t]) for i, j in enumerate(int_idx)},
        trace_drift=float(max(trace_drift)),
        top_populations={b: float(max(t[i] for t in tops)) for i, b in enumerate(bosons)} if tops else {},
        min_diagonal=float(min(min_diag)),
    )
    return traj


def residual(rho: np.ndarray, model: LindbladModel) -> float:
    return float(np.abs(lindblad_rhs(rho, model)).max())


def _null_space_steady_state(model: LindbladModel) -> np.ndarray:
    n = model.dim
    L = model.liouvillian.tolil()
    # replace the equation for rho[0,0] by the trace condition
    L[0, :] = sp.identity(n, dtype=complex, format="csr").reshape(1, n * n)
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(L.tocsc(), rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SteadyStateError(f"generator kernel is not one-dimensional: {exc}", math.nan) from None
    if not np.all(np.isfinite(x)):
        raise SteadyStateError("singular generator (non-unique steady state)", math.nan)
    return symmetrize(x.reshape(n, n))


def steady_state(
    model: LindbladModel,
    config: EvolveConfig | None = None,
    strategy: str = "auto",
    tol: float = 1e-10,
    rho_guess: np.ndarray | None = None,
    max_time: float | None = None,
) -> np.ndarray:
    """Stationary state of the generator.

    ``strategy='null-space'`` solves the vectorized generator with a trace-one
    constraint; ``'time-march'`` integrates from ``rho_guess`` (default: the
    global ground state) until the residual ``max|L rho|`` drops below
    ``tol * max_rate``. ``'auto'`` picks null-space for dimension <= 100.
    """
    if model.max_rate <= 0:
        raise ValueError("steady state needs at least one non-zero dissipator")
    if strategy == "auto":
        strategy = "null-space" if model.dim <= 100 else "time-march"
    threshold = tol * model.max_rate
    if strategy == "null-space":
        rho = _null_space_steady_state(model)
        res = residual(rho, model)
        if res > threshold:
            raise SteadyStateError("null-space solution fails the residual test", res)
        return rho
    if strategy != "time-march":
        raise ValueError(f"unknown steady-state strategy {strategy!r}")

    config = config or EvolveConfig()
    rho = ground_state(model.layout) if rho_guess is None else np.array(rho_guess, dtype=complex)
    rates = [r for r, _ in model.dissipators if r > 0]
    chunk = 5.0 / min(rates)
    horizon = max_time if max_time is not None else 2000.0 / min(rates)
    elapsed = 0.0
    res = residual(rho, model)
    while res > threshold:
        if elapsed >= horizon:
            raise SteadyStateError(f"time march did not converge within {horizon:.3e} s", res)
        step = min(chunk, horizon - elapsed)
        rho = evolve(rho, model, step, config, observables={}).final_state
        elapsed += step
        res = residual(rho, model)
        log.debug("time march t=%.3e residual=%.3e", elapsed, res)
    return rho


def prepare_initial(rho_ss: np.ndarray, layout: HilbertLayout) -> tuple[np.ndarray, HilbertLayout]:
    """Put the spin in |e> and keep the reduced state of everything else.

    Accepts a state with or without a spin subsystem; returns the state on the
    full layout (spin first).
    """
    e = fock_dm(2, 1)
    if "spin" in layout.labels:
        others = [lab for lab in layout.labels if lab != "spin"]
        if not others:
            return e, layout
        bath, bath_layout = partial_trace(rho_ss, layout, others)
    else:
        bath, bath_layout = rho_ss, layout
    full = HilbertLayout((2,) + bath_layout.dims, ("spin",) + bath_layout.labels)
    return tensor_states(e, bath), full
