import math
import warnings

import numpy as np
import pytest

from spinphoton.constants import CODATA2018
from spinphoton.model import (
    TWO_PI, ParameterError, SingularDetuningError, SystemParams, build_model, caption_point, derive,
    dressed_splitting, feasibility, high_performance_point, scaled_params, spin_mechanics_coupling,
    thermal_occupation,
)
from spinphoton.merit import analytic_suite
from spinphoton.operators import partial_trace


def test_thermal_occupation_300K_3MHz():
    n = thermal_occupation(300.0, TWO_PI * 3e6)
    assert n == pytest.approx(1.380649e-23 * 300 / (1.054571817e-34 * TWO_PI * 3e6), rel=1e-15)
    assert abs(n - 2.084e6) <= 0.001e6


def test_caption_derived_rates():
    d = derive(caption_point())
    assert d.Omega / TWO_PI == pytest.approx(10e3, rel=1e-12)
    assert d.n_th * d.gamma_m / TWO_PI == pytest.approx(1.25e4, rel=1e-3)
    assert d.Gamma_th / TWO_PI == pytest.approx(125.0, rel=1e-2)
    assert d.R / TWO_PI == pytest.approx(19.1e3, rel=1e-2)
    assert d.beta_0 == pytest.approx(0.987, abs=1e-3)
    assert caption_point().kappa_sp == pytest.approx(2 * d.Omega, rel=1e-14)


def test_derive_sign_of_delta_irrelevant():
    assert derive(caption_point(+1.0)).R == derive(caption_point(-1.0)).R
    assert caption_point(-1.0).omega_q == pytest.approx(TWO_PI * 2e6)
    assert caption_point(+1.0).omega_q == pytest.approx(TWO_PI * 4e6)


def test_derive_errors_and_zero_temperature():
    with pytest.raises(SingularDetuningError):
        derive(caption_point().replace(delta=0.0))
    d = derive(caption_point().replace(T=0.0))
    assert d.n_th == 0 and d.Gamma_th == 0 and d.beta_0 == 1.0


def test_derive_scaling_invariance():
    p = caption_point()
    s = 3.0
    q = p.replace(lam=s * p.lam, g_sp=s * p.g_sp, g_c=s * p.g_c, kappa_sp=s * p.kappa_sp,
                  kappa_c=s * p.kappa_c, gamma_star=s * p.gamma_star, delta=s * p.delta,
                  f_m=s * p.f_m, T=s * p.T)
    a, b = derive(p), derive(q)
    assert b.n_th == pytest.approx(a.n_th, rel=1e-14)
    for k in ("Omega", "Gamma_th", "R"):
        assert getattr(b, k) == pytest.approx(s * getattr(a, k), rel=1e-12)
    assert b.beta_0 == pytest.approx(a.beta_0, rel=1e-12)


def test_hz_round_trip():
    p = caption_point()
    back = SystemParams.from_hz(**p.to_hz())
    for k, v in p.to_hz().items():
        assert getattr(back, k) == pytest.approx(getattr(p, k), rel=1e-15)
    assert p.to_hz()["g_c"] == pytest.approx(150e3)


@pytest.mark.parametrize("bad", [{"f_m": 0}, {"Q_m": -1}, {"T": -1}, {"kappa_c": -1}, {"t_l": 3e-5}])
def test_parameter_validation(bad):
    with pytest.raises(ParameterError):
        caption_point().replace(**bad)


def test_spin_mechanics_coupling():
    lam = spin_mechanics_coupling(1e8, 1e-13, 3e6)
    x_zpf = math.sqrt(1.054571817e-34 / (2 * 1e-13 * TWO_PI * 3e6))
    assert lam == pytest.approx(2 * 9.2740100783e-24 * x_zpf * 1e8 / 1.054571817e-34, rel=1e-14)
    # regression value, pinned after first evaluation
    assert lam == pytest.approx(93023.76638079302, rel=1e-12)
    assert spin_mechanics_coupling(2e8, 1e-13, 3e6) == pytest.approx(2 * lam, rel=1e-14)
    assert spin_mechanics_coupling(1e8, 4e-13, 3e6) == pytest.approx(lam / 2, rel=1e-14)
    with pytest.raises(ParameterError):
        spin_mechanics_coupling(0, 1e-13, 3e6)


def test_dressed_splitting():
    assert dressed_splitting(TWO_PI * 1e6, TWO_PI * 10e6) == pytest.approx(TWO_PI * 100e3)
    assert dressed_splitting(2 * TWO_PI * 1e6, TWO_PI * 40e6) == pytest.approx(
        4 * dressed_splitting(TWO_PI * 1e6, TWO_PI * 40e6))
    with pytest.warns(UserWarning):
        dressed_splitting(1.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dressed_splitting(1.0, 10.0)
    with pytest.raises(SingularDetuningError):
        dressed_splitting(1.0, 0.0)


def test_model_structure_and_hermiticity():
    m = build_model(caption_point(), (4, 3, 3))
    assert m.layout.labels == ("spin", "phonon", "photon", "cooling")
    assert m.dim == 2 * 4 * 3 * 3
    assert m.hermiticity_residual() < 1e-12
    assert len(m.dissipators) == 5


def _coupled_pairs(model):
    """Subsystem pairs linked by nonzero off-diagonal Hamiltonian elements."""
    dims = model.layout.dims
    H = (model.H - model.H0).tocoo()
    pairs = set()
    for i, j, v in zip(H.row, H.col, H.data):
        if abs(v) == 0:
            continue
        di, dj = np.unravel_index(i, dims), np.unravel_index(j, dims)
        changed = tuple(k for k in range(len(dims)) if di[k] != dj[k])
        pairs.add(frozenset(model.layout.labels[k] for k in changed))
    return pairs


def test_interaction_couples_only_phonon_pairs():
    pairs = _coupled_pairs(build_model(caption_point(), (3, 2, 2)))
    assert pairs == {frozenset({"spin", "phonon"}), frozenset({"photon", "phonon"}),
                     frozenset({"cooling", "phonon"})}


def test_spin_drive_switch():
    pairs = _coupled_pairs(build_model(caption_point(), (3, 2, 2), include_spin_drive=False))
    assert frozenset({"spin", "phonon"}) not in pairs


def test_invalid_truncation():
    with pytest.raises(ValueError):
        build_model(caption_point(), (1, 3, 4))


def test_decoupled_populations_preserved():
    from spinphoton.dynamics import EvolveConfig, evolve
    from spinphoton.operators import fock_dm, tensor_states, thermal_dm

    p = caption_point().replace(lam=0.0, g_sp=0.0, g_c=0.0, kappa_sp=0.0, kappa_c=0.0,
                                gamma_star=TWO_PI * 1e3, T=0.0)
    m = build_model(p, (3, 2, 2))
    rho0 = tensor_states(fock_dm(2, 1), thermal_dm(3, 0.3), fock_dm(2, 1), fock_dm(2, 0))
    out = evolve(rho0, m, 2e-6, EvolveConfig.for_params(p)).final_state
    for lab in m.layout.labels:
        a, _ = partial_trace(rho0, m.layout, [lab])
        b, _ = partial_trace(out, m.layout, [lab])
        assert np.allclose(np.diag(a), np.diag(b), atol=1e-9)


def test_feasibility_caption_point():
    r = feasibility(caption_point())
    assert r.sideband_resolved.ok and r.no_normal_mode_splitting.ok and r.cooling_sufficient.ok
    assert r.cooling_sufficient.margin == pytest.approx(9.0e10 / (1.25e4 * (2 * 1.25e4 + 6e5)), rel=2e-3)
    assert r.critical_coupling_residual < 1e-12
    assert r.all_ok
    assert feasibility(caption_point()) == r


def test_feasibility_failures():
    assert not feasibility(caption_point().replace(g_c=0.0)).cooling_sufficient.ok
    assert not feasibility(caption_point().replace(g_c=TWO_PI * 1.3e6)).no_normal_mode_splitting.ok
    assert feasibility(caption_point().replace(g_c=TWO_PI * 1.0e6)).no_normal_mode_splitting.ok
    assert not feasibility(caption_point().replace(kappa_c=TWO_PI * 4e6)).sideband_resolved.ok
    assert not feasibility(caption_point().replace(lam=TWO_PI * 2e6)).adiabatic_ok.ok


def test_scaled_params_keep_ratios():
    p = caption_point()
    q = scaled_params(p, 0.5)
    a, b = derive(p), derive(q)
    for k in ("Omega", "Gamma_th", "R", "beta_0"):
        assert getattr(b, k) == pytest.approx(getattr(a, k), rel=1e-12)
    assert b.Omega / q.kappa_sp == pytest.approx(a.Omega / p.kappa_sp, rel=1e-12)
    assert q.kappa_c / q.omega_m == pytest.approx(p.kappa_c / p.omega_m, rel=1e-12)
    assert q.g_c / q.kappa_c == pytest.approx(p.g_c / p.kappa_c, rel=1e-12)
    assert b.n_th * b.gamma_m / q.delta == pytest.approx(a.n_th * a.gamma_m / p.delta, rel=1e-12)
    with pytest.raises(ParameterError):
        scaled_params(p, 0.0)


def test_high_performance_point_rates():
    p = high_performance_point()
    d = derive(p)
    assert p.kappa_sp == pytest.approx(2 * d.Omega)
    assert p.kappa_c == pytest.approx(2 * p.g_c)
    assert d.beta_0 > derive(caption_point()).beta_0


def test_analytic_suite_matches_derive():
    p = caption_point()
    d, est = derive(p), analytic_suite(p)
    for k in ("Omega", "Gamma_th", "R", "beta_0"):
        assert getattr(est, k) == getattr(d, k)


def test_constants_header():
    assert "CODATA-2018" in CODATA2018.header()
