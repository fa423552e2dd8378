"""Optimal non-uniform sampling schemes from Cramér-Rao bound minimisation."""

from .errors import (
    AllSingularError,
    ConfigError,
    EmptyGridError,
    InfeasibleError,
    InfeasibleStartError,
    MaxIterationsError,
    SamplerError,
    SingularFimError,
    TooLargeError,
)
from .models import CandidateGrid, ModelKind, NoiseSpec, SignalModel, grad_mean, mean, per_sample_fim
from .fisher import (
    FimBank,
    ParamGrid,
    aggregate_fim,
    apply_param_transform,
    build_bank,
    build_banks,
    crlb_diag,
    crlb_table,
    is_positive_definite,
    weighted_crlb_sum,
    worst_case_crlb,
)
from .designer import (
    Cutoff,
    DesignProblem,
    DesignResult,
    TopM,
    exhaustive_design,
    reweight_iterate,
    solve_relaxed,
    solve_sdp,
    threshold,
)
from .estimation import EstimationGrid, Observation, nls_estimate, rmse, simulate, simulate_trials
from .bench import (
    PRESETS,
    Report,
    Scenario,
    compare_methods,
    crlb_rmse_curve,
    preset_config,
    random_baseline,
    run_scenario,
    uniform_decimation,
)

__version__ = "0.1.0"
