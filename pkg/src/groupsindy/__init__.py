"""Group-sparse identification of ODE models shared by several data sources."""

from .core import (
    CoefficientMatrix,
    IdentifiedModel,
    RegressionProblem,
    SourceSeries,
    StructuralError,
    l20_norm,
    objective,
)
from .diagnostics import degeneracy_warning, full_rank_check, sparse_coercivity
from .dictionary import DictionarySpec, build_dictionary, enumerate_monomials, rescale
from .differentiation import add_noise, central_difference
from .dynamics import integrate, lorenz, logistic, duffing, simulate_switching, split_into_segments
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    load_config,
    lorenz_regimes_experiment,
    run_trials,
    switching_experiment,
)
from .pipeline import identify
from .solver import SolverConfig, SolverTrace, solve

__version__ = "0.1.0"

__all__ = [
    "CoefficientMatrix",
    "DictionarySpec",
    "ExperimentConfig",
    "ExperimentReport",
    "IdentifiedModel",
    "RegressionProblem",
    "SolverConfig",
    "SolverTrace",
    "SourceSeries",
    "StructuralError",
    "add_noise",
    "build_dictionary",
    "central_difference",
    "degeneracy_warning",
    "duffing",
    "emit_report",
    "enumerate_monomials",
    "full_rank_check",
    "identify",
    "integrate",
    "l20_norm",
    "load_config",
    "logistic",
    "lorenz",
    "lorenz_regimes_experiment",
    "objective",
    "rescale",
    "run_trials",
    "simulate_switching",
    "solve",
    "sparse_coercivity",
    "split_into_segments",
    "switching_experiment",
]
