"""Physical parameters, adiabatic analytics and the spin-optomechanical generator.

All rates stored on :class:`SystemParams` are angular (rad/s); the mechanical
frequency ``f_m`` is the one ordinary frequency (Hz). The Raman detuning
``delta`` is signed, ``omega_q = omega_m + delta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .constants import CODATA2018, Constants
from .operators import HilbertLayout, annihilation, dag, embed, identity, spin_lowering

TWO_PI = 2.0 * math.pi

#: SystemParams fields carrying angular rates; configuration files give these in Hz.
ANGULAR_FIELDS = ("lam", "g_sp", "g_c", "kappa_sp", "kappa_c", "gamma_star", "delta", "gamma_relax")

DEFAULT_TRUNCATION = (8, 3, 4)
BOSON_LABELS = ("phonon", "photon", "cooling")


class ParameterError(ValueError):
    pass


class SingularDetuningError(ParameterError):
    pass


@dataclass(frozen=True)
class SystemParams:
    f_m: float
    Q_m: float
    T: float
    lam: float
    g_sp: float
    g_c: float
    kappa_sp: float
    kappa_c: float
    gamma_star: float
    delta: float
    t_l: float
    t_u: float
    # spin relaxation; not part of the reference master equation, off by default
    gamma_relax: float = 0.0

    def __post_init__(self):
        for name in ("lam", "g_sp", "g_c", "kappa_sp", "kappa_c", "gamma_star", "gamma_relax"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if not self.f_m > 0:
            raise ParameterError("f_m must be > 0")
        if not self.Q_m > 0:
            raise ParameterError("Q_m must be > 0")
        if self.T < 0:
            raise ParameterError("T must be >= 0")
        if not (self.t_u > self.t_l >= 0):
            raise ParameterError(f"need t_u > t_l >= 0, got t_l={self.t_l}, t_u={self.t_u}")

    @classmethod
    def from_hz(cls, **values) -> "SystemParams":
        """Build from ordinary frequencies: every rate in ``ANGULAR_FIELDS`` gets a 2*pi."""
        conv = {k: (TWO_PI * v if k in ANGULAR_FIELDS else v) for k, v in values.items()}
        return cls(**conv)

    def to_hz(self) -> dict:
        return {f.name: getattr(self, f.name) / TWO_PI if f.name in ANGULAR_FIELDS else getattr(self, f.name)
                for f in fields(self)}

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @property
    def omega_m(self) -> float:
        return TWO_PI * self.f_m

    @property
    def omega_q(self) -> float:
        return self.omega_m + self.delta

    @property
    def gamma_m(self) -> float:
        return self.omega_m / self.Q_m


def caption_point(delta_sign: float = -1.0) -> SystemParams:
    """The reference operating point shared by every figure panel.

    ``delta_sign`` selects which side of the mechanical frequency the dressed
    spin sits on; only |delta| is fixed by the figure. The default (spin below
    the phonon, omega_q = omega_m - 2pi*1 MHz) reproduces the published merits.
    """
    g = TWO_PI * 100e3
    delta = TWO_PI * 1e6
    return SystemParams(
        f_m=3e6, Q_m=5e8, T=300.0,
        lam=g, g_sp=g, g_c=TWO_PI * 150e3,
        kappa_sp=2 * g * g / delta,  # 2*Omega
        kappa_c=TWO_PI * 600e3,
        gamma_star=TWO_PI * 200.0,
        delta=math.copysign(delta, delta_sign),
        t_l=10e-6, t_u=22e-6,
    )


def high_performance_point(delta_sign: float = -1.0) -> SystemParams:
    """Higher-Q operating point (f_m = 2 MHz, Q_m = 1e10)."""
    g = TWO_PI * 50e3
    delta = TWO_PI * 0.6e6
    return SystemParams(
        f_m=2e6, Q_m=1e10, T=300.0,
        lam=g, g_sp=g, g_c=TWO_PI * 30e3,
        kappa_sp=2 * g * g / delta,
        kappa_c=TWO_PI * 60e3,
        gamma_star=TWO_PI * 200.0,
        delta=math.copysign(delta, delta_sign),
        t_l=20e-6, t_u=65e-6,
    )


def scaled_params(params: SystemParams, s: float) -> SystemParams:
    """Slow the mechanics by ``s`` while keeping the effective spin-photon physics.

    omega_m, delta, kappa_c, g_c and the thermal decoherence rate n_th*gamma_m
    scale by ``s``; lambda and g_sp by sqrt(s). Omega, Gamma_th, R, kappa_sp,
    gamma_star and the gate are unchanged, as are Omega/kappa_sp,
    Gamma_th/Omega, kappa_c/omega_m, g_c/kappa_c and n_th*gamma_m/delta. The
    adiabaticity ratio delta/lambda shrinks by sqrt(s).
    """
    if not 0 < s <= 1:
        raise ParameterError("scale factor must be in (0, 1]")
    r = math.sqrt(s)
    return params.replace(
        f_m=params.f_m * s,
        delta=params.delta * s,
        kappa_c=params.kappa_c * s,
        g_c=params.g_c * s,
        lam=params.lam * r,
        g_sp=params.g_sp * r,
        # n_th*gamma_m = k_B T / (hbar Q_m) is independent of omega_m
        Q_m=params.Q_m / s,
    )


@dataclass(frozen=True)
class DerivedParams:
    omega_m: float
    omega_q: float
    gamma_m: float
    n_th: float
    Omega: float
    Gamma_th: float
    R: float
    beta_0: float


def thermal_occupation(T: float, omega_m: float, constants: Constants = CODATA2018) -> float:
    """High-temperature mean phonon number k_B T / (hbar omega_m)."""
    return constants.k_B * T / (constants.hbar * omega_m)


def derive(params: SystemParams, constants: Constants = CODATA2018) -> DerivedParams:
    if params.delta == 0:
        raise SingularDetuningError("Raman detuning delta must be non-zero")
    d = abs(params.delta)
    n_th = thermal_occupation(params.T, params.omega_m, constants)
    gamma_m = params.gamma_m
    Omega = params.g_sp * params.lam / d
    Gamma_th = params.g_sp * params.lam * n_th * gamma_m / d**2
    denom = params.kappa_sp + 2 * params.gamma_star + 4 * Gamma_th
    R = 4 * Omega**2 / denom if denom > 0 else math.inf
    if math.isinf(R):
        beta_0 = 1.0
    elif R + 2 * Gamma_th > 0:
        beta_0 = R / (R + 2 * Gamma_th)
    else:
        beta_0 = 0.0
    return DerivedParams(
        omega_m=params.omega_m,
        omega_q=params.omega_q,
        gamma_m=gamma_m,
        n_th=n_th,
        Omega=Omega,
        Gamma_th=Gamma_th,
        R=R,
        beta_0=beta_0,
    )


def spin_mechanics_coupling(G_m: float, m_eff: float, f_m: float, constants: Constants = CODATA2018) -> float:
    """Magnetic spin-mechanics coupling rate (rad/s) from a field gradient (T/m)."""
    if G_m <= 0 or m_eff <= 0 or f_m <= 0:
        raise ParameterError("gradient, effective mass and frequency must be positive")
    x_zpf = math.sqrt(constants.hbar / (2 * m_eff * TWO_PI * f_m))
    return 2 * constants.mu_B * x_zpf * G_m / constants.hbar


def dressed_splitting(Omega_q: float, Delta_q: float) -> float:
    """Dressed-state splitting Omega_q**2 / Delta_q of the microwave-driven spin."""
    if Delta_q == 0:
        raise SingularDetuningError("microwave detuning must be non-zero")
    if abs(Delta_q) < 10 * abs(Omega_q):
        warnings.warn(
            f"dressed-state formula assumes |Delta_q| >> Omega_q (ratio {abs(Delta_q / Omega_q) if Omega_q else math.inf:.3g} < 10)",
            stacklevel=2,
        )
    return Omega_q**2 / Delta_q


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus ``(rate, collapse operator)`` pairs on one layout.

    ``H0`` is the diagonal free part (the ``omega`` terms); ``H`` includes the
    interaction.
    """

    H: sp.csr_matrix
    dissipators: list
    layout: HilbertLayout
    H0: sp.csr_matrix | None = None
    ops: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.layout.total

    @cached_property
    def H_eff(self) -> sp.csr_matrix:
        """Non-Hermitian effective Hamiltonian H - i/2 sum rate A^dag A."""
        out = self.H.astype(complex)
        for rate, A in self.dissipators:
            if rate:
                out = out - 0.5j * rate * (dag(A) @ A)
        return out.tocsr()

    @cached_property
    def liouvillian(self) -> sp.csr_matrix:
        """Generator acting on row-major ``rho.reshape(-1)``."""
        n = self.dim
        eye = identity(n)
        heff = self.H_eff
        L = -1j * sp.kron(heff, eye) + 1j * sp.kron(eye, heff.conj())
        for rate, A in self.dissipators:
            if rate:
                L = L + rate * sp.kron(A, A.conj())
        return L.tocsr()

    @cached_property
    def liouvillian_T(self) -> sp.csr_matrix:
        return self.liouvillian.T.tocsr()

    @cached_property
    def max_rate(self) -> float:
        return max((r for r, _ in self.dissipators), default=0.0)

    def hermiticity_residual(self) -> float:
        diff = self.H - dag(self.H)
        return float(abs(diff).max()) if diff.nnz else 0.0


def build_model(
    params: SystemParams,
    trunc: tuple[int, int, int] = DEFAULT_TRUNCATION,
    include_spin_drive: bool = True,
    include_spin: bool = True,
    constants: Constants = CODATA2018,
) -> LindbladModel:
    """Assemble the linearized spin-optomechanical master equation.

    H = w_q (s+s- + a^dag a) + w_m (b^dag b + c^dag c)
        + [(lam s- + g_sp a + g_c c)(b + b^dag) + h.c.]

    with dissipators gamma_star D[s+s-], kappa_sp D[a], kappa_c D[c],
    gamma_m n_th D[b^dag], gamma_m (1 + n_th) D[b]. ``include_spin_drive=False``
    switches the spin-phonon coupling off; ``include_spin=False`` drops the
    spin from the layout altogether (used for cooling equilibration).
    """
    N_b, N_a, N_c = (int(x) for x in trunc)
    dims, labels = (N_b, N_a, N_c), BOSON_LABELS
    if include_spin:
        dims, labels = (2,) + dims, ("spin",) + labels
    # annihilation() validates each truncation
    b1, a1, c1 = annihilation(N_b), annihilation(N_a), annihilation(N_c)
    layout = HilbertLayout(dims, labels)

    b = embed(b1, "phonon", layout)
    a = embed(a1, "photon", layout)
    c = embed(c1, "cooling", layout)
    n_th = thermal_occupation(params.T, params.omega_m, constants)
    w_m, w_q = params.omega_m, params.omega_q

    coupling = params.g_sp * a + params.g_c * c
    H0 = w_q * (dag(a) @ a) + w_m * (dag(b) @ b + dag(c) @ c)
    ops = {"a": a, "b": b, "c": c}
    dissipators = []
    if include_spin:
        sm = embed(spin_lowering(), "spin", layout)
        ops["sm"] = sm
        H0 = H0 + w_q * (dag(sm) @ sm)
        if include_spin_drive:
            coupling = coupling + params.lam * sm
        dissipators.append((params.gamma_star, (dag(sm) @ sm).tocsr()))
    X = coupling @ (b + dag(b))
    H = (H0 + X + dag(X)).tocsr()
    dissipators += [
        (params.kappa_sp, a),
        (params.kappa_c, c),
        (params.gamma_m * n_th, dag(b)),
        (params.gamma_m * (1 + n_th), b),
    ]
    if include_spin and params.gamma_relax > 0:
        dissipators.append((params.gamma_relax, ops["sm"]))
    model = LindbladModel(H=H, dissipators=dissipators, layout=layout, H0=H0.tocsr(), ops=ops)
    res = model.hermiticity_residual()
    if res > 1e-12 * max(1.0, abs(H).max()):
        raise AssertionError(f"Hamiltonian not Hermitian (residual {res:.3g})")
    return model


@dataclass(frozen=True)
class Check:
    ok: bool
    margin: float  # ratio of the two sides, > 1 when satisfied


@dataclass(frozen=True)
class FeasibilityReport:
    sideband_resolved: Check
    no_normal_mode_splitting: Check
    cooling_sufficient: Check
    adiabatic_ok: Check
    rwa_ok: Check
    delta_over_lambda: float
    delta_over_g_sp: float
    delta_over_omega_q: float
    g_c_over_omega_m: float
    critical_coupling_residual: float

    CHECKS = ("sideband_resolved", "no_normal_mode_splitting", "cooling_sufficient", "adiabatic_ok", "rwa_ok")

    @property
    def all_ok(self) -> bool:
        return all(getattr(self, name).ok for name in self.CHECKS)

    def lines(self) -> list[str]:
        out = []
        for name in self.CHECKS:
            chk = getattr(self, name)
            out.append(f"{name:26s} {'PASS' if chk.ok else 'FAIL'}  margin={chk.margin:.6g}")
        for name in ("delta_over_lambda", "delta_over_g_sp", "delta_over_omega_q", "g_c_over_omega_m",
                     "critical_coupling_residual"):
            out.append(f"{name:26s} {getattr(self, name):.6g}")
        return out


def _ratio(big: float, small: float) -> float:
    if small == 0:
        return math.inf if big > 0 else math.nan
    return big / small


def feasibility(params: SystemParams, derived: DerivedParams | None = None) -> FeasibilityReport:
    """Evaluate the cooling-window, adiabatic-elimination and RWA inequalities.

    Strong inequalities (``>>``) are reported by their sign like the strict
    ones; the margin carries how well they hold.
    """
    derived = derived if derived is not None else derive(params)
    d = abs(params.delta)
    heat = derived.n_th * derived.gamma_m
    lhs_cool, rhs_cool = 4 * params.g_c**2, heat * (2 * heat + params.kappa_c)
    ratios = {
        "delta_over_lambda": _ratio(d, params.lam),
        "delta_over_g_sp": _ratio(d, params.g_sp),
        "delta_over_omega_q": _ratio(d, abs(derived.omega_q)),
        "g_c_over_omega_m": _ratio(params.g_c, derived.omega_m),
    }
    adiabatic_margin = min(ratios["delta_over_lambda"], ratios["delta_over_g_sp"])
    rwa_margin = min(
        _ratio(abs(derived.omega_q), d), _ratio(derived.omega_m, d),
        _ratio(abs(derived.omega_q), params.g_c), _ratio(derived.omega_m, params.g_c),
    )
    crit = abs(d * params.kappa_sp - 2 * params.g_sp * params.lam)
    crit = crit / (d * params.kappa_sp) if params.kappa_sp > 0 else math.inf
    return FeasibilityReport(
        sideband_resolved=Check(params.kappa_c < derived.omega_m, _ratio(derived.omega_m, params.kappa_c)),
        no_normal_mode_splitting=Check(params.g_c < 2 * params.kappa_c, _ratio(2 * params.kappa_c, params.g_c)),
        cooling_sufficient=Check(lhs_cool > rhs_cool, _ratio(lhs_cool, rhs_cool)),
        adiabatic_ok=Check(adiabatic_margin > 1, adiabatic_margin),
        rwa_ok=Check(rwa_margin > 1, rwa_margin),
        critical_coupling_residual=crit,
        **ratios,
    )
