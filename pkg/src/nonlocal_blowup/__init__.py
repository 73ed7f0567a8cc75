"""Numerical study of blowup for u_t = Δu − u + θ(t) u^p with θ = (⨍u^r)^{−γ}.

Radial solver on the N-ball with Neumann conditions, similarity-variable
diagnostics, Hermite mode decomposition, reduced ODE models, the
intermediate-region rescaling and the prepared initial data.
"""

from .params import DerivedConstants, ModelParameters, derive_constants
from .grid import RadialField, RadialGrid, build_grid, compute_theta
from .solver import SolverConfig, TrajectoryRecord, run_to_blowup
from .similarity import SimilarityFrame, compute_q, profile_phi, to_similarity
from .spectral import ShrinkingSetConfig, decompose, shrinking_set_check
from .initial_data import PreparedDataSpec, construct_initial_data, verify_in_S0
from .harness import RunConfig, run_experiment, shooting_sweep

__version__ = "0.1.0"

__all__ = [
    "ModelParameters",
    "DerivedConstants",
    "derive_constants",
    "RadialGrid",
    "RadialField",
    "build_grid",
    "compute_theta",
    "SolverConfig",
    "TrajectoryRecord",
    "run_to_blowup",
    "SimilarityFrame",
    "to_similarity",
    "profile_phi",
    "compute_q",
    "ShrinkingSetConfig",
    "decompose",
    "shrinking_set_check",
    "PreparedDataSpec",
    "construct_initial_data",
    "verify_in_S0",
    "RunConfig",
    "run_experiment",
    "shooting_sweep",
]
