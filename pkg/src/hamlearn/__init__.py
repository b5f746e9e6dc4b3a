"""Sparse identification of spin Hamiltonians from measured expectation-value dynamics."""
from .circuits import (
    GateLibrary,
    ParameterVector,
    apply_circuit,
    default_library,
    forecast,
    single_step_error,
    xx_network_library,
)
from .dynamics import Hamiltonian, Trajectory, exact_evolve, generate_trajectory, random_pure_state
from .experiments import builtin_experiments, get_experiment, reproduce, run_experiment
from .identify import (
    FullAccessProblem,
    IdentificationResult,
    LimitedAccessProblem,
    SparseOptConfig,
    parameter_error,
    sparse_identify,
)
from .pauli import MeasurementVector, PauliString, expectation, measure_all, reconstruct_state

__version__ = "0.1.0"

__all__ = [
    "FullAccessProblem",
    "GateLibrary",
    "Hamiltonian",
    "IdentificationResult",
    "LimitedAccessProblem",
    "MeasurementVector",
    "ParameterVector",
    "PauliString",
    "SparseOptConfig",
    "Trajectory",
    "apply_circuit",
    "builtin_experiments",
    "default_library",
    "exact_evolve",
    "expectation",
    "forecast",
    "generate_trajectory",
    "get_experiment",
    "measure_all",
    "parameter_error",
    "random_pure_state",
    "reconstruct_state",
    "reproduce",
    "run_experiment",
    "single_step_error",
    "sparse_identify",
    "xx_network_library",
]
