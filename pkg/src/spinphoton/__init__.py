"""Simulation of a phonon-mediated spin-photon interface.

A dressed spin qubit couples to a mechanical resonator, which in turn couples
to an emitting optical cavity and to a second, strongly damped cooling cavity.
The package builds the Lindblad model, evolves it, computes two-time
correlators of the emitted light and turns them into brightness, purity and
indistinguishability.
"""

__version__ = "0.1.0"
