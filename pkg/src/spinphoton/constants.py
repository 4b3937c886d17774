"""Physical constants (CODATA 2018), fixed so derived values are reproducible."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Constants:
    k_B: float = 1.380649e-23  # J/K, exact
    hbar: float = 1.054571817e-34  # J s, exact (h/2pi)
    mu_B: float = 9.2740100783e-24  # J/T
    name: str = "CODATA-2018"

    def header(self) -> str:
        vals = ", ".join(f"{k}={v!r}" for k, v in asdict(self).items() if k != "name")
        return f"{self.name}: {vals}"


CODATA2018 = Constants()
