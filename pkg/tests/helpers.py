"""Small hand-built models shared by the test modules."""

import numpy as np
import scipy.sparse as sp

from spinphoton.model import LindbladModel
from spinphoton.operators import HilbertLayout, annihilation, dag, embed, spin_lowering


def lossy_mode(n_levels=6, kappa=1.0, omega=0.0):
    lay = HilbertLayout((n_levels,), ("photon",))
    a = annihilation(n_levels)
    H = (omega * dag(a) @ a).tocsr()
    return LindbladModel(H=H, dissipators=[(kappa, a)], layout=lay, H0=H, ops={"a": a})


def thermal_mode(n_levels, gamma, nbar, omega=0.0, label="photon"):
    lay = HilbertLayout((n_levels,), (label,))
    a = annihilation(n_levels)
    H = (omega * dag(a) @ a).tocsr()
    diss = [(gamma * (1 + nbar), a), (gamma * nbar, dag(a))]
    return LindbladModel(H=H, dissipators=diss, layout=lay, H0=H, ops={"a": a})


def exchange_model(omega_q, omega_c, g, n_levels=3, kappa=0.0, gamma_star=0.0):
    """Spin exchanging excitations with one mode: g (s+ a + s- a^dag)."""
    lay = HilbertLayout((2, n_levels), ("spin", "photon"))
    sm = embed(spin_lowering(), "spin", lay)
    a = embed(annihilation(n_levels), "photon", lay)
    H0 = (omega_q * dag(sm) @ sm + omega_c * dag(a) @ a).tocsr()
    H = (H0 + g * (dag(sm) @ a + sm @ dag(a))).tocsr()
    diss = [(kappa, a), (gamma_star, (dag(sm) @ sm).tocsr())]
    return LindbladModel(H=H, dissipators=diss, layout=lay, H0=H0, ops={"a": a, "sm": sm})


def random_state(n, seed=0):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def dense(op):
    return op.toarray() if sp.issparse(op) else np.asarray(op)
