"""Online machine-activation scheduling: an online fractional engine,
online randomized rounding, an exact offline oracle, and an experiment
harness."""

from .doubling import (
    DoublingResult,
    GuessBoundExceededError,
    PhaseTrace,
    default_initial_guess,
    run_with_doubling,
)
from .fractional import (
    FractionalState,
    GuessTooSmallError,
    JobFraction,
    StepOutcome,
    effective_capacity,
    preprocess,
)
from .instances import (
    GeneratorConfig,
    Instance,
    InstanceFormatError,
    Job,
    Machine,
    generate,
    load_instance,
    load_trace,
    save_instance,
    save_trace,
)
from .oracle import (
    InfeasibleInstanceError,
    OracleResult,
    OracleTooLargeError,
    feasible,
    optimal_bnb,
    optimal_exhaustive,
)
from .rounding import RoundingState, draw_thresholds, process_job_rounded

__version__ = "0.1.0"

__all__ = [
    "DoublingResult",
    "FractionalState",
    "GeneratorConfig",
    "GuessBoundExceededError",
    "GuessTooSmallError",
    "Instance",
    "InstanceFormatError",
    "InfeasibleInstanceError",
    "Job",
    "JobFraction",
    "Machine",
    "OracleResult",
    "OracleTooLargeError",
    "PhaseTrace",
    "RoundingState",
    "StepOutcome",
    "default_initial_guess",
    "draw_thresholds",
    "effective_capacity",
    "feasible",
    "generate",
    "load_instance",
    "load_trace",
    "optimal_bnb",
    "optimal_exhaustive",
    "preprocess",
    "process_job_rounded",
    "run_with_doubling",
    "save_instance",
    "save_trace",
]
