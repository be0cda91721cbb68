"""Bayes-factor variable selection for Gaussian linear regression."""

from .errors import (
    BfselectError,
    BudgetError,
    CollinearColumnError,
    ConstantColumnError,
    DegenerateResponseError,
    EnumerationBudgetError,
    IndeterminateComparisonError,
    InfeasibleConfigError,
    InputError,
    NumericError,
    QuadratureError,
    SingularModelError,
)
from .linalg import (
    Dataset,
    RSquared,
    incremental_rss,
    min_eigen,
    model_basis,
    r_squared,
    standardize,
)
from .bayes import (
    BetaPrimeMixing,
    ModelScorer,
    SparsitySizePrior,
    TruncatedPoissonPrior,
    ZellnerSiowMixing,
    log_bf_closed,
    log_bf_quadrature,
    log_bf_vs_null,
    log_prior_odds,
)
from .search import (
    PosteriorSummary,
    SearchConfig,
    enumerate_posterior,
    posterior_of_model,
    stochastic_search,
)
from .diagnostics import (
    check_standardization,
    check_signal_condition,
    estimate_zeta_min,
    run_diagnostics,
)
from .experiments import (
    Equicorrelated,
    IIDGaussian,
    NLogN,
    Power,
    SyntheticConfig,
    consistency_experiment,
    generate,
    overfit_class_experiment,
    underfit_bound_check,
)
from .stablelaw import (
    StableSimConfig,
    diverging_mean_check,
    h_statistic_sweep,
    hill_tail_index,
    ks_trend,
    run_stable_sim,
    stable_cdf,
)

__version__ = "0.1.0"
