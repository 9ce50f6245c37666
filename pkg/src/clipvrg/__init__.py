"""Attack-resilient distributed stochastic gradient simulation.

A round-synchronous multi-agent simulator for the clipped variance-reduced
gradient method (CLIP-VRG) and its undefended DSGD baseline, with topology
and mixing-matrix construction, decaying-schedule validation, gradient-attack
models, ground-truth metric pipelines, a config-driven CLI and scikit-learn
estimator wrappers.
"""
from .attacks import AttackSpec, apply_attack, sample_attacked_set
from .engine import (
    AgentState,
    NetworkState,
    RunResult,
    clip_coefficient,
    clipvrg_round,
    dsgd_round,
    estimator_update,
    make_sampler,
    run,
)
from .errors import (
    AttackOutputError,
    ConfigError,
    InvalidStateError,
    NotFittableError,
    NumericalFailure,
)
from .metrics import (
    CSV_HEADER,
    Evaluator,
    MetricsRow,
    classification_accuracy,
    consensus_error,
    consensus_report,
    fit_rate_exponent,
    make_evaluator,
    max_l2_error,
    suboptimality,
    write_csv,
)
from .problems import (
    LinearMeasurementProblem,
    LogisticProblem,
    ScalarQuadraticProblem,
    check_attack_fraction,
    feasible_rho,
    gradient_step,
    load_classification_csv,
    make_grid_estimation,
    make_synthetic_classification,
    max_attacked_count,
    solve_minimizer,
)
from .schedules import (
    OPTIMAL_TAU_ALPHA,
    OPTIMAL_TAU_GAMMA,
    Schedule,
    ScheduleSet,
    derive_eta,
    lemma1_constant,
    min_phi,
    rate_exponent_bound,
    validate_exponents,
)
from .topology import (
    Graph,
    MixingMatrix,
    build_complete,
    build_cycle_k,
    build_grid,
    build_random_geometric,
    is_connected,
    metropolis_weights,
    read_edgelist,
    spectral_gap,
    write_edgelist,
)

__version__ = "0.1.0"

_LAZY = ("ClipVRGClassifier", "DSGDClassifier")


def __getattr__(name):
    # The sklearn wrappers import scikit-learn; keep that off the CLI path.
    if name in _LAZY:
        from . import estimators

        return getattr(estimators, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
