"""Policy-evaluation laboratory for least-squares temporal-difference learning.

Exposes finite Markov reward processes with exact closed-form oracles, linear
feature geometry, the trace-based least-squares estimator, calculators for
every finite-sample bound, and a seeded Monte-Carlo harness.
"""

from .bounds import (
    BoundInputs,
    BoundReport,
    EpsilonTerms,
    MixingParams,
    NotFound,
    approximation_bound,
    capital_i,
    capital_j,
    capital_j_gamma,
    capital_lambda,
    epsilon_terms,
    estimation_bound,
    gamma_cap,
    global_bound,
    h_explicit,
    m_star,
    n_zero,
    n_zero_expression,
)
from .chain import (
    GarnetSpec,
    MarkovRewardProcess,
    NonConvergence,
    SingularSystem,
    StationaryDistribution,
    Trajectory,
    bellman_apply,
    exact_value,
    garnet_generate,
    sample_trajectory,
    stationary_distribution,
    t_lambda_apply,
)
from .features import (
    FeatureMap,
    MuGeometry,
    RankDeficient,
    SingularGram,
    mu_geometry,
    mu_norm,
    random_features,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    RunRecord,
    TooManyFailures,
    instance_document,
    instance_from_document,
    run_experiment,
    summarize,
    sweep_bounds,
)
from .lstd import (
    EligibilityTrace,
    ExactSolution,
    LstdEstimate,
    PerturbationCheck,
    SingularA,
    estimate_at,
    exact_A_b,
    lstd_error,
    lstd_estimate,
    lstd_estimate_checkpoints,
    lstd_estimate_truncated,
    perturbation_check,
    trace_matrix,
    truncated_trace_matrix,
)

__version__ = "0.1.0"
