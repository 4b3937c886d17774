"""Truncated operators on a composite spin/boson Hilbert space.

Basis convention used everywhere in the package: subsystems are ordered
spin, phonon, photon, cooling mode; the spin basis is ``(|d>, |e>)``; the
Kronecker product is row-major, so the first subsystem is the slowest
varying index. Operators are kept as ``scipy.sparse`` CSR matrices and
density matrices as dense ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class TruncationError(ValueError):
    """A bosonic truncation too small to hold a ladder operator."""


class LayoutError(ValueError):
    """Operator or state does not match the Hilbert-space layout."""


@dataclass(frozen=True)
class HilbertLayout:
    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.dims) != len(self.labels):
            raise LayoutError("dims and labels differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise LayoutError(f"duplicate subsystem labels {self.labels}")
        if any(d < 1 for d in self.dims):
            raise LayoutError(f"subsystem dimensions must be >= 1, got {self.dims}")

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str | int) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < len(self.dims):
                raise LayoutError(f"subsystem index {label} out of range")
            return int(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"no subsystem named {label!r} in {self.labels}") from None

    def reduced(self, keep: Iterable[str | int]) -> "HilbertLayout":
        idx = sorted({self.index(k) for k in keep})
        return HilbertLayout(tuple(self.dims[i] for i in idx), tuple(self.labels[i] for i in idx))


def identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=complex, format="csr")


def annihilation(n_levels: int) -> sp.csr_matrix:
    """Bosonic lowering operator truncated to ``n_levels`` Fock states."""
    if n_levels < 2:
        raise TruncationError(f"need at least 2 Fock levels, got {n_levels}")
    return sp.diags(np.sqrt(np.arange(1, n_levels, dtype=float)), 1, dtype=complex, format="csr")


def number(n_levels: int) -> sp.csr_matrix:
    a = annihilation(n_levels)
    return (a.conj().T @ a).tocsr()


def spin_lowering() -> sp.csr_matrix:
    """``|d><e|`` in the ``(|d>, |e>)`` basis."""
    return sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))


def dag(op):
    return op.conj().T.tocsr() if sp.issparse(op) else op.conj().T


def kron(*ops) -> sp.csr_matrix:
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), ops).tocsr()


def embed(op, index: str | int, layout: HilbertLayout) -> sp.csr_matrix:
    """Lift a single-subsystem operator to the full space of ``layout``."""
    i = layout.index(index)
    op = sp.csr_matrix(op, dtype=complex)
    if op.shape != (layout.dims[i], layout.dims[i]):
        raise LayoutError(
            f"operator of shape {op.shape} cannot act on subsystem "
            f"{layout.labels[i]!r} of dimension {layout.dims[i]}"
        )
    factors = [identity(d) for d in layout.dims]
    factors[i] = op
    return kron(*factors)


def _check_square(mat, layout: HilbertLayout | None, what: str):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise LayoutError(f"{what} must be square, got shape {mat.shape}")
    if layout is not None and mat.shape[0] != layout.total:
        raise LayoutError(f"{what} has dimension {mat.shape[0]}, layout expects {layout.total}")


def expectation(obs, rho: np.ndarray) -> complex:
    """``Tr(obs @ rho)`` without forming the product."""
    if obs.shape != rho.shape:
        raise LayoutError(f"observable {obs.shape} and state {rho.shape} differ")
    if sp.issparse(obs):
        return complex(obs.multiply(rho.T).sum())
    return complex(np.einsum("ij,ji->", obs, rho))


def partial_trace(rho: np.ndarray, layout: HilbertLayout, keep: Iterable[str | int]):
    """Reduce ``rho`` onto the subsystems in ``keep``.

    Returns the reduced density matrix and its layout. Kept subsystems stay in
    layout order regardless of the order given.
    """
    keep_idx = sorted({layout.index(k) for k in keep})
    if not keep_idx:
        raise LayoutError("partial_trace needs at least one subsystem to keep")
    _check_square(rho, layout, "state")
    n = len(layout.dims)
    t = rho.reshape(layout.dims + layout.dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep_idx:
            col[i] = row[i]
    out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    sub = layout.reduced(keep_idx)
    return reduced.reshape(sub.total, sub.total), sub


def tensor_states(*rhos: np.ndarray) -> np.ndarray:
    return reduce(np.kron, rhos)


def fock_dm(n_levels: int, k: int) -> np.ndarray:
    rho = np.zeros((n_levels, n_levels), dtype=complex)
    rho[k, k] = 1.0
    return rho


def thermal_dm(n_levels: int, nbar: float) -> np.ndarray:
    """Bose-Einstein diagonal state, renormalized on the truncated space."""
    if nbar == 0:
        return fock_dm(n_levels, 0)
    ratio = nbar / (1.0 + nbar)
    p = ratio ** np.arange(n_levels)
    return np.diag(p / p.sum()).astype(complex)


def ground_state(layout: HilbertLayout) -> np.ndarray:
    return tensor_states(*(fock_dm(d, 0) for d in layout.dims))


def top_level_populations(rho: np.ndarray, layout: HilbertLayout, labels: Sequence[str]) -> dict[str, float]:
    """Population of the highest retained Fock level of each named subsystem."""
    diag = np.real(np.diagonal(rho)).reshape(layout.dims)
    out = {}
    for label in labels:
        i = layout.index(label)
        out[label] = float(np.take(diag, -1, axis=i).sum())
    return out
