"""Pulse-level quantum error mitigation with an adaptive genetic optimizer."""

from .circuits import build_deutsch_jozsa, build_grover, ideal_output_state
from .evolve import SolverOptions, propagate
from .ga import GAConfig, baseline_individual, evaluate_fitness, run
from .harness import ExperimentConfig, ExperimentResult, load_config, run_experiment
from .noise import NoiseParams
from .pulse import build_spin_chain_processor, grape_compile, schedule_for_circuit
from .qmath import state_fidelity

__version__ = "0.1.0"

__all__ = [
    "build_deutsch_jozsa",
    "build_grover",
    "ideal_output_state",
    "SolverOptions",
    "propagate",
    "GAConfig",
    "baseline_individual",
    "evaluate_fitness",
    "run",
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "run_experiment",
    "NoiseParams",
    "build_spin_chain_processor",
    "grape_compile",
    "schedule_for_circuit",
    "state_fidelity",
    "__version__",
]
