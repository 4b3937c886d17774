import math

import numpy as np
import pytest
import scipy.linalg as sla

from helpers import dense, exchange_model, lossy_mode, random_state, thermal_mode
from spinphoton.dynamics import (
    EvolveConfig, SteadyStateError, evolve, lindblad_rhs, prepare_initial, residual, stable_step,
    steady_state,
)
from spinphoton.integrate import StepSizeUnderflow, propagate
from spinphoton.model import TWO_PI, build_model, caption_point
from spinphoton.operators import (
    HilbertLayout, LayoutError, dag, expectation, fock_dm, ground_state, number, tensor_states, thermal_dm,
)


def test_rhs_matches_vectorized_generator():
    m = build_model(caption_point(), (3, 2, 2))
    rho = random_state(m.dim, 1)
    lhs = lindblad_rhs(rho, m).reshape(-1)
    rhs = m.liouvillian @ rho.reshape(-1)
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * np.max(np.abs(rhs))


def test_rhs_shape_error():
    with pytest.raises(LayoutError):
        lindblad_rhs(np.eye(3), lossy_mode(4))


def test_decay_rate_of_single_photon():
    m = lossy_mode(4, kappa=2.5)
    d = lindblad_rhs(fock_dm(4, 1), m)
    assert expectation(number(4), d).real == pytest.approx(-2.5, abs=1e-14)


def test_thermal_pump_rate_at_vacuum():
    gamma, nbar = 0.7, 3.0
    m = thermal_mode(5, gamma, nbar)
    d = lindblad_rhs(fock_dm(5, 0), m)
    assert expectation(number(5), d).real == pytest.approx(gamma * nbar, abs=1e-14)


def test_zero_time_returns_input():
    m = lossy_mode(4)
    rho = random_state(4, 2)
    out = evolve(rho, m, 0.0)
    assert np.array_equal(out.final_state, rho)


@pytest.mark.parametrize("method", ["rk4", "rk45"])
def test_damped_cavity_decay(method):
    kappa = 1.0
    m = lossy_mode(5, kappa=kappa, omega=20.0)
    cfg = EvolveConfig(method=method, rel_tol=1e-9, abs_tol=1e-13, dt_init=1e-3 if method == "rk4" else 1e-2)
    rho0 = fock_dm(5, 3)
    traj = evolve(rho0, m, 5.0, cfg)
    t, n = traj.times, traj.observables["n_a"]
    exact = 3 * np.exp(-kappa * t)
    assert np.max(np.abs(n - exact) / exact) < 1e-8
    assert traj.trace_drift < 1e-10


def test_generalized_rabi_oscillation():
    g, wq = TWO_PI * 1.0, TWO_PI * 20.0
    for Delta in (0.0, TWO_PI * 1.5):
        m = exchange_model(wq, wq - Delta, g, n_levels=2)
        rho0 = tensor_states(fock_dm(2, 1), fock_dm(2, 0))
        cfg = EvolveConfig(dt_init=1e-4)
        traj = evolve(rho0, m, 2.0, cfg)
        W = math.sqrt(Delta**2 + 4 * g**2)
        pe = 1 - (4 * g**2 / W**2) * np.sin(W * traj.times / 2) ** 2
        assert np.max(np.abs(traj.observables["n_spin"] - pe)) < 1e-8


def test_rk4_fourth_order():
    m = exchange_model(TWO_PI * 3, TWO_PI * 2, TWO_PI * 1, n_levels=3, kappa=0.5, gamma_star=0.3)
    rho0 = tensor_states(fock_dm(2, 1), thermal_dm(3, 0.2))
    T = 1.0
    exact = (sla.expm(dense(m.liouvillian) * T) @ rho0.reshape(-1)).reshape(m.dim, m.dim)
    errs = []
    for dt in (0.02, 0.01):
        out = evolve(rho0, m, T, EvolveConfig(dt_init=dt)).final_state
        errs.append(np.max(np.abs(out - exact)))
    assert errs[0] / errs[1] == pytest.approx(16, abs=3)


def test_rk4_step_respects_stability_bound():
    m = lossy_mode(4, kappa=1.0, omega=1e6)
    assert EvolveConfig(dt_init=1.0).step(m) == pytest.approx(stable_step(m))


def test_rotating_frame_agrees_with_lab():
    p = caption_point()
    m = build_model(p, (3, 2, 2))
    rho0 = tensor_states(fock_dm(2, 1), thermal_dm(3, 0.3), thermal_dm(2, 0.05), fock_dm(2, 0))
    exact = (sla.expm(dense(m.liouvillian) * 2e-6) @ rho0.reshape(-1)).reshape(m.dim, m.dim)
    lab = evolve(rho0, m, 2e-6, EvolveConfig.for_params(p, max_dt=1e-9)).final_state
    rot = evolve(rho0, m, 2e-6, EvolveConfig.for_params(p, method="rk45", rel_tol=1e-10,
                                                        frame="detuned-rotating")).final_state
    assert np.max(np.abs(lab - exact)) < 1e-8
    assert np.max(np.abs(rot - exact)) < 1e-8
    # default lab-frame ceiling of 1/(50 f_m): small but visible discretization error
    coarse = evolve(rho0, m, 2e-6, EvolveConfig.for_params(p)).final_state
    assert np.max(np.abs(coarse - exact)) < 1e-5


def test_integrated_observable_matches_quadrature():
    m = lossy_mode(4, kappa=1.0)
    traj = evolve(fock_dm(4, 2), m, 3.0, EvolveConfig(dt_init=1e-3), sample_times=[1.0, 3.0],
                  integrate_observables=("n_a",))
    exact = [2 * (1 - math.exp(-1.0)), 2 * (1 - math.exp(-3.0))]
    assert np.allclose(traj.sample_integrals["n_a"], exact, rtol=1e-10)
    assert traj.integrals["n_a"] == pytest.approx(exact[1], rel=1e-10)


def test_step_underflow_reports_time():
    f = lambda t, y: -1e12 * (y - np.cos(t))
    with pytest.raises(StepSizeUnderflow) as info:
        propagate(f, np.array([0.0]), 0.0, [1.0], method="rk45", dt=1e-3, rtol=1e-10, atol=1e-14, min_dt=1e-6)
    assert 0 <= info.value.t < 1.0


@pytest.mark.parametrize("strategy", ["null-space", "time-march"])
def test_thermal_steady_state(strategy):
    nbar = 0.2
    m = thermal_mode(20, 1.0, nbar)
    rho = steady_state(m, EvolveConfig(dt_init=0.05), strategy=strategy)
    assert expectation(number(20), rho).real == pytest.approx(nbar, abs=1e-6)
    assert np.max(np.abs(rho - np.diag(np.diag(rho)))) < 1e-9
    p = (nbar / (1 + nbar)) ** np.arange(20) / (1 + nbar)
    assert np.allclose(np.diag(rho).real, p, atol=1e-8)
    assert residual(rho, m) < 1e-10 * m.max_rate


def test_uncoupled_steady_state_is_ground():
    p = caption_point().replace(lam=0.0, g_sp=0.0, g_c=0.0, T=0.0)
    m = build_model(p, (3, 2, 2))
    # spin populations are conserved without relaxation: kernel is degenerate
    with pytest.raises(SteadyStateError):
        steady_state(m, strategy="null-space")
    rho = steady_state(m, EvolveConfig.for_params(p), strategy="time-march")
    assert np.allclose(rho, ground_state(m.layout), atol=1e-12)
    relaxing = build_model(p.replace(gamma_relax=TWO_PI * 100.0), (3, 2, 2))
    rho = steady_state(relaxing, strategy="null-space")
    assert np.max(np.abs(rho - ground_state(m.layout))) < 1e-10


def test_steady_state_fixed_point_of_rhs():
    m = build_model(caption_point(), (3, 2, 2), include_spin=False)
    rho = steady_state(m)
    assert np.max(np.abs(lindblad_rhs(rho, m))) < 1e-10 * m.max_rate


def test_prepare_initial():
    lay = HilbertLayout((2, 3, 2, 2), ("spin", "phonon", "photon", "cooling"))
    bath = tensor_states(thermal_dm(3, 0.1), fock_dm(2, 0), thermal_dm(2, 0.01))
    rho = tensor_states(fock_dm(2, 1), bath)
    out, full = prepare_initial(rho, lay)
    assert full == lay and np.allclose(out, rho, atol=1e-15)
    out2, full2 = prepare_initial(bath, lay.reduced(["phonon", "photon", "cooling"]))
    assert full2 == lay and np.allclose(out2, rho, atol=1e-15)
    rho_d = tensor_states(fock_dm(2, 0), bath)
    out3, _ = prepare_initial(rho_d, lay)
    assert np.allclose(out3, rho, atol=1e-15)
