"""Design-based inference for the average treatment effect in stratified and paired experiments."""

from .bootstrap import (
    AnalysisResult,
    BootstrapResult,
    analyze,
    bootstrap_paired,
    bootstrap_stratified,
    empirical_quantile,
    percentile_t_ci,
)
from .ecdf import (
    Ecdf,
    QuantileFn,
    ecdf_from_sample,
    frechet_upper_joint,
    quantile,
    quantile_product_integral,
)
from .estimator import StratifiedATE
from .estimators import (
    ConfidenceInterval,
    EstimandReport,
    VarianceReport,
    diff_in_means,
    neyman_variance,
    normal_quantile,
    paired_variance,
    sharp_variance,
    wald_ci,
)
from .exceptions import (
    DegenerateBootstrap,
    DesignError,
    DomainError,
    EmptySample,
    EmptyStratumArm,
    IdentityViolation,
    InputError,
    InsufficientArm,
    NonFiniteOutcome,
    NotPaired,
    NotSharpEligible,
    SingletonStratum,
    StrataBootError,
    TooFewPairs,
    TooLargeToEnumerate,
)
from .experiment import (
    DesignKind,
    FinitePopulation,
    ObservedExperiment,
    StratifiedDesign,
    classify_design,
    population_truth,
    validate_observed,
)
from .imputation import (
    constant_effect_impute,
    copy_counts,
    expand_arm,
    rank_preserving_impute,
)
from .oracle import (
    concentration_bound,
    exact_distribution,
    riemann_integral_oracle,
    verify_variance_identities,
)
from .randomizer import RngState, draw_assignment, enumerate_assignments
from .simulation import (
    DgpSpec,
    Distribution,
    SimReport,
    generate_population,
    run_paired_study,
    run_stratified_study,
)

__version__ = "0.1.0"
