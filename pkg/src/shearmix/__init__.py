"""Quantitative mixing toolkit for diffusion with transverse shear transport.

The package computes every explicit constant appearing in the mixing
analysis of the evolution  du/dt = dxx u - V(x) dy u  on the unit torus:
functional constants of the velocity field, resolvent gaps of the associated
one-dimensional mode operators, Doeblin-type lower bounds, exact heat and
Kolmogorov kernels, Fourier-mode PDE evolution, and Monte Carlo transition
kernel estimates, together with an acceptance battery cross-checking them
against each other.
"""

from . import velocity, functionals, spectral, kernels, evolve, mcsim, validation

__all__ = ["velocity", "functionals", "spectral", "kernels", "evolve", "mcsim",
           "validation"]
__version__ = "0.1.0"
