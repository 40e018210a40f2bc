"""Energy-conserving least-squares kernel collocation for Hamiltonian wave equations."""

from ._accel import backend
from .errors import (
    FactorizationFailure,
    HamwaveError,
    InvalidArgument,
    SingularShift,
    StalledDerivative,
    StateError,
    Unsupported,
)
from .kernel import KernelSpec
from .problems import PROBLEM_IDS, builtin
from .solver import SolverConfig
from .timestepper import RunConfig, initialize, run

__version__ = "0.1.0"

__all__ = [
    "FactorizationFailure",
    "HamwaveError",
    "InvalidArgument",
    "KernelSpec",
    "PROBLEM_IDS",
    "RunConfig",
    "SingularShift",
    "SolverConfig",
    "StalledDerivative",
    "StateError",
    "Unsupported",
    "backend",
    "builtin",
    "initialize",
    "run",
]
