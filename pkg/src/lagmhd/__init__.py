"""Numerical laboratory for ideal incompressible MHD near a uniform magnetic background.

Two independent solvers (a Lagrangian wave-elliptic system and a pseudo-spectral
Eulerian oracle), anisotropic space-time Sobolev norms, and a harness that
checks functional inequalities by sampling.
"""

from .fourier_core import Field, Grid, SpaceTimeField, TensorField, make_cutoff
from .lagrangian_system import NumericalError

__version__ = "0.1.0"

__all__ = ["Field", "Grid", "NumericalError", "SpaceTimeField", "TensorField", "make_cutoff", "__version__"]
