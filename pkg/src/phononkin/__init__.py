"""Anharmonic lattice dynamics, Wigner ensembles and the phonon Boltzmann equation."""

__version__ = "0.1.0"
