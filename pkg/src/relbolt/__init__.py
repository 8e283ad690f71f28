"""Homogeneous relativistic Boltzmann equation with hard-ball scattering.

Modules
-------
kinematics
    Four-vector algebra, collision invariants and the center-of-momentum boost.
collision
    Gain, loss and collision frequency on a momentum grid.
carleman
    Hypersurface (Carleman) form of the gain term and a Monte-Carlo estimator.
equilibrium
    Juttner distributions, Bessel functions and moment fitting.
solver
    Time stepping and per-step diagnostics.
verify
    Randomized and trajectory checks of the operator estimates.
cli
    Command-line front end (``relbolt``).
"""

from .collision import ScatterKernel, collide_full, linear_L, post_collision, q_gain, q_loss
from .equilibrium import JuttnerParams, MomentSet, bessel_k, fit_juttner, juttner_eval, moments
from .grid import GridFunction, MomentumGrid
from .initial import InitialCondition
from .quadrature import SphereQuadrature
from .solver import SimConfig, run

__version__ = "0.1.0"

__all__ = [
    "GridFunction",
    "InitialCondition",
    "JuttnerParams",
    "MomentSet",
    "MomentumGrid",
    "ScatterKernel",
    "SimConfig",
    "SphereQuadrature",
    "bessel_k",
    "collide_full",
    "fit_juttner",
    "juttner_eval",
    "linear_L",
    "moments",
    "post_collision",
    "q_gain",
    "q_loss",
    "run",
]
