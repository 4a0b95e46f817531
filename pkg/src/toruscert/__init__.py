"""Integrability certificates for vector fields on U x T^2.

Symbolic expressions (``exprlang``), Fourier-Galerkin kernels (``fourier``,
``search``), fiberwise tensor calculus (``geometry``), the constructive
propositions (``constructions``), trajectories and sections (``flow``) and
the verdict layer (``certify``, ``cli``).
"""
__version__ = "0.1.0"
